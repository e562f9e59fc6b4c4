"""Local HSIC-Lasso feature explanations on the fused 6-dim representation.

For one node we gather its k-hop neighborhood, freeze the 6 fused features
(replies, quotes, retweets, 3 projected text dims) and the model
probabilities over that neighborhood, and fit a nonnegative Lasso between
per-feature Gaussian kernels and the output kernel.  The resulting betas
say which features locally drive the prediction; the three text dims are
summed into a single "Text" score for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .gat import GatModel, compute_multimodal, model_forward, predict
from .graph import InteractionGraph, k_hop_neighborhood

SIGMA_FLOOR = 1e-8
CONSTANT_TOL = 1e-12  # ‖HKH‖_F below this means the column carried no signal

FEATURE_NAMES = ("replies", "quotes", "retweets", "text_0", "text_1", "text_2")
GROUP_NAMES = ("Number of replies", "Number of quotes", "Number of retweets", "Text")
CLASS_NAMES = ("Misinformation", "Factual")


class ExplainError(Exception):
    pass


class NeighborhoodTooSmall(ExplainError):
    def __init__(self, n: int, min_samples: int):
        self.n = n
        self.min_samples = min_samples
        super().__init__(
            f"neighborhood has {n} node(s), need at least {min_samples};"
            " retry with more hops"
        )


class NonpositiveSigma(ExplainError):
    pass


@dataclass(frozen=True)
class ExplainerConfig:
    hops: int = 2
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    rho: float = 0.1
    min_samples: int = 5

    def __post_init__(self):
        if self.hops < 0:
            raise ValueError("hops must be >= 0")
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise NonpositiveSigma("sigma_x and sigma_y must be positive")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if self.min_samples < 2:
            raise ValueError("min_samples must be >= 2")


@dataclass
class ExplanationSample:
    """Frozen neighborhood snapshot the kernels are built from."""

    indices: np.ndarray          # sorted node indices, shape (n,)
    X: np.ndarray                # (n, 6) column-standardized fused features
    y: np.ndarray                # (n,) raw model probabilities


@dataclass
class LassoResult:
    beta: np.ndarray             # (d,) nonnegative
    objective: float
    history: list[float]         # objective after each sweep
    converged: bool
    sweeps: int


@dataclass
class FeatureImportance:
    node_id: str
    prediction: int              # 0 = Misinformation, 1 = Factual
    probability: float           # P(Misinformation)
    beta: np.ndarray             # (6,) aligned to FEATURE_NAMES
    grouped: np.ndarray          # (4,) aligned to GROUP_NAMES, Text = β3+β4+β5
    ranking: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "label": CLASS_NAMES[self.prediction],
            "probability": float(self.probability),
            "beta": [float(b) for b in self.beta],
            "grouped": {
                "replies": float(self.grouped[0]),
                "quotes": float(self.grouped[1]),
                "retweets": float(self.grouped[2]),
                "text": float(self.grouped[3]),
            },
            "ranking": list(self.ranking),
            "flags": list(self.flags),
        }


def _standardize(column: np.ndarray) -> np.ndarray:
    col = np.asarray(column, dtype=np.float64)
    sigma = max(float(col.std()), SIGMA_FLOOR)
    return (col - col.mean()) / sigma


def collect_neighborhood(
    model: GatModel,
    graph: InteractionGraph,
    features,
    node: int,
    hops: int = 2,
    min_samples: int = 5,
) -> ExplanationSample:
    """k-hop sample around `node`: standardized fused features + probabilities."""
    idx = np.array(sorted(k_hop_neighborhood(graph, node, hops)), dtype=np.int64)
    if idx.size < min_samples:
        raise NeighborhoodTooSmall(int(idx.size), min_samples)
    mm = compute_multimodal(model, features)
    p, _ = model_forward(model, graph, features, tape=None)
    X = np.column_stack([_standardize(mm[idx, d]) for d in range(mm.shape[1])])
    return ExplanationSample(indices=idx, X=X, y=p.data[idx].copy())


def gaussian_kernel_matrix(column: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise NonpositiveSigma(f"sigma must be positive, got {sigma}")
    x = np.asarray(column, dtype=np.float64)
    diff = x[:, None] - x[None, :]
    return np.exp(-(diff * diff) / (2.0 * sigma * sigma))


def center_normalize(K: np.ndarray) -> tuple[np.ndarray, bool]:
    """K̄ = HKH/‖HKH‖_F; flag (and return zeros) when the kernel is constant."""
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    centered = H @ K @ H
    norm = float(np.linalg.norm(centered))
    if norm < CONSTANT_TOL:
        return np.zeros_like(K), True
    return centered / norm, False


def hsic_lasso_solve(
    kernels: np.ndarray,
    L: np.ndarray,
    rho: float,
    tol: float = 1e-10,
    max_sweeps: int = 10000,
) -> LassoResult:
    """Cyclic coordinate descent for min_{β≥0} ½‖L − Σ β_d K_d‖² + ρ‖β‖₁.

    `kernels` is (d, n²) of vectorized centered kernels, `L` the vectorized
    centered output kernel.  Each coordinate has the closed-form update
    β_d ← max(0, (c_d − ρ)/a_d); zero-norm columns (constant features) are
    pinned at 0.
    """
    A = np.asarray(kernels, dtype=np.float64)
    l = np.asarray(L, dtype=np.float64).ravel()
    if A.ndim != 2 or A.shape[1] != l.size:
        raise ad.ShapeMismatch(f"kernels {A.shape} vs output {l.shape}")
    if rho < 0:
        raise ValueError("rho must be >= 0")
    d = A.shape[0]
    a = np.einsum("ij,ij->i", A, A)  # per-coordinate curvature ‖K_d‖²
    beta = np.zeros(d)
    resid = l.copy()
    history: list[float] = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        delta = 0.0
        for j in range(d):
            if a[j] <= 0.0:
                continue
            c = A[j] @ resid + beta[j] * a[j]
            new = max(0.0, (c - rho) / a[j])
            if new != beta[j]:
                resid += A[j] * (beta[j] - new)
                delta = max(delta, abs(new - beta[j]))
                beta[j] = new
        history.append(0.5 * float(resid @ resid) + rho * float(beta.sum()))
        if delta < tol:
            converged = True
            break
    return LassoResult(
        beta=beta,
        objective=history[-1],
        history=history,
        converged=converged,
        sweeps=sweeps,
    )


def explain_node(
    model: GatModel,
    graph: InteractionGraph,
    features,
    node: int,
    config: ExplainerConfig | None = None,
) -> FeatureImportance:
    cfg = config or ExplainerConfig()
    sample = collect_neighborhood(
        model, graph, features, node, hops=cfg.hops, min_samples=cfg.min_samples
    )
    flags: list[str] = []
    vecs = []
    for dcol in range(sample.X.shape[1]):
        K, const = center_normalize(
            gaussian_kernel_matrix(sample.X[:, dcol], cfg.sigma_x)
        )
        if const:
            flags.append(f"constant_feature:{FEATURE_NAMES[dcol]}")
        vecs.append(K.ravel())
    Lbar, const_out = center_normalize(
        gaussian_kernel_matrix(_standardize(sample.y), cfg.sigma_y)
    )
    if const_out:
        flags.append("constant_output")
    fit = hsic_lasso_solve(np.stack(vecs), Lbar.ravel(), cfg.rho)
    if not fit.converged:
        flags.append("did_not_converge")
    beta = fit.beta
    grouped = np.array([beta[0], beta[1], beta[2], beta[3] + beta[4] + beta[5]])
    order = np.argsort(-grouped, kind="stable")
    pos = int(np.searchsorted(sample.indices, node))
    prob = float(sample.y[pos])
    return FeatureImportance(
        node_id=graph.node_ids[node],
        prediction=int(predict(np.array([prob]))[0]),
        probability=prob,
        beta=beta,
        grouped=grouped,
        ranking=[GROUP_NAMES[i] for i in order],
        flags=flags,
    )
