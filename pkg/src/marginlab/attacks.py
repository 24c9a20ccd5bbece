"""Perturbation search inside a norm ball: projections, surrogate baselines
(FGSM, projected ascent on cross-entropy), per-class margin ascent with the
final best-class selection, a closed form for linear models, and exhaustive
grid oracles for low-dimensional certification.

Every iterative attack tracks the best candidate it actually evaluated
(clean point, random start, every iterate) so the reported perturbation is
never worse than doing nothing; this is what makes robust accuracy <= clean
accuracy hold exactly during evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelSpec, ParamSet, forward_logits
from .objectives import cross_entropy, zero_one_error
from .optim import OptimState, step
from .tensor import Tensor, take_per_row, tsum

NORMS = ("l_inf", "l2")


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    norm: str = "l_inf"
    steps: int = 10
    optimizer: str = None   # resolved per attack: rmsprop for margin ascent, sign_sgd for pgd
    step_size: float = None
    box: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def resolve_step_size(cfg: AttackConfig) -> float:
    """2/255 at the canonical eps=8/255, otherwise 2*eps/steps."""
    if cfg.step_size is not None:
        return cfg.step_size
    if np.isclose(cfg.epsilon, 8.0 / 255.0):
        return 2.0 / 255.0
    return 2.0 * cfg.epsilon / max(cfg.steps, 1)


@dataclass
class AttackResult:
    eta_star: np.ndarray
    j_star: int
    margin_value: float
    success: bool
    per_class_margins: np.ndarray


def _result_at(spec, params, x, y, eta) -> AttackResult:
    logits = forward_logits(spec, params, x + eta).data[0]
    margins = logits - logits[int(y)]
    m = margins.copy()
    m[int(y)] = -np.inf
    j_star = int(np.argmax(m))
    return AttackResult(
        eta_star=np.asarray(eta, dtype=np.float64),
        j_star=j_star,
        margin_value=float(m[j_star]),
        success=bool(zero_one_error(logits, y)),
        per_class_margins=margins,
    )


# -- feasible set --------------------------------------------------------------


def project(x: np.ndarray, candidate: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """Map a candidate point back into the ball around x (and the unit box)."""
    x = np.asarray(x, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    if x.shape != candidate.shape:
        raise ValueError("x and candidate shapes differ")
    if cfg.norm == "l_inf":
        lo, hi = x - cfg.epsilon, x + cfg.epsilon
        if cfg.box:
            lo, hi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
        return np.clip(candidate, lo, hi)
    eta = candidate - x
    norms = np.linalg.norm(eta, axis=-1, keepdims=True)
    scale = np.where(norms > cfg.epsilon, cfg.epsilon / np.maximum(norms, 1e-300), 1.0)
    out = x + eta * scale
    if cfg.box:
        # x is in the box, so clamping only moves coordinates toward x and
        # cannot grow the perturbation norm
        out = np.clip(out, 0.0, 1.0)
    return out


def _uniform_start(x: np.ndarray, cfg: AttackConfig, rng) -> np.ndarray:
    lo, hi = x - cfg.epsilon, x + cfg.epsilon
    if cfg.box:
        lo, hi = np.maximum(lo, 0.0), np.minimum(hi, 1.0)
    start = rng.uniform(lo, hi)
    return project(x, start, cfg)


def _rng(cfg_seed, *key):
    return np.random.default_rng(np.random.SeedSequence((int(cfg_seed),) + tuple(int(k) for k in key)))


# -- margin ascent -------------------------------------------------------------


def targeted_ascent_batch(spec: ModelSpec, params: ParamSet, X: np.ndarray,
                          y: np.ndarray, targets: np.ndarray, cfg: AttackConfig,
                          seed=None):
    """Projected ascent on logits[target] - logits[y] for a whole batch.

    Returns (etas[n,d], margins[n]) for the best iterate each row has seen;
    the clean point and the random start are both in the candidate set.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.intp)
    if np.any(targets == y):
        raise ValueError("target class must differ from the true class")
    n = X.shape[0]
    rng = _rng(cfg.seed if seed is None else seed)

    def margins_at(points):
        logits = forward_logits(spec, params, points).data
        rows = np.arange(n)
        return logits[rows, targets] - logits[rows, y]

    best_pts = X.copy()
    best_m = margins_at(X)

    if cfg.epsilon == 0 or cfg.steps == 0:
        return best_pts - X, best_m

    pts = _uniform_start(X, cfg, rng)
    opt = OptimState(cfg.optimizer or "rmsprop", resolve_step_size(cfg))
    for _ in range(cfg.steps):
        pert = Tensor(pts, requires_grad=True)
        logits = forward_logits(spec, params, pert)
        margin = tsum(take_per_row(logits, targets)) - tsum(take_per_row(logits, y))
        margin.backward()
        m_now = logits.data[np.arange(n), targets] - logits.data[np.arange(n), y]
        improved = m_now > best_m
        best_m = np.where(improved, m_now, best_m)
        best_pts[improved] = pts[improved]
        pts = project(X, step(opt, pts, pert.grad, direction="ascend"), cfg)
    m_now = margins_at(pts)
    improved = m_now > best_m
    best_m = np.where(improved, m_now, best_m)
    best_pts[improved] = pts[improved]
    return best_pts - X, best_m


def targeted_margin_ascent(spec: ModelSpec, params: ParamSet, x, y: int,
                           j: int, cfg: AttackConfig, seed=None):
    """(eta, margin) for a single sample and a single target class."""
    etas, margins = targeted_ascent_batch(
        spec, params, np.atleast_2d(x), np.array([y]), np.array([j]), cfg,
        seed=seed)
    return etas[0], float(margins[0])


def beta_attack_batch(spec: ModelSpec, params: ParamSet, X: np.ndarray,
                      y: np.ndarray, cfg: AttackConfig, seed=None):
    """Per-class margin ascent for every wrong class, then the best class.

    Returns (etas[n,d], j_stars[n], margins[n]).  Each of the K-1 target
    subproblems gets its own derived seed, so running them serially or in
    parallel yields identical results.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.intp)
    n, k = X.shape[0], spec.class_count
    base = cfg.seed if seed is None else seed
    # slot s holds, per sample, the s-th smallest class index != y
    wrong = np.array([[j for j in range(k) if j != yi] for yi in y], dtype=np.intp)
    best_eta = np.zeros_like(X)
    best_m = np.full(n, -np.inf)
    best_j = np.zeros(n, dtype=np.intp)
    for s in range(k - 1):
        targets = wrong[:, s]
        etas, margins = targeted_ascent_batch(
            spec, params, X, y, targets, cfg, seed=(int(base) * (k - 1) + s))
        improved = margins > best_m  # strict: ties keep the lower class index
        best_m = np.where(improved, margins, best_m)
        best_eta[improved] = etas[improved]
        best_j[improved] = targets[improved]
    return best_eta, best_j, best_m


def beta_attack(spec: ModelSpec, params: ParamSet, x, y: int,
                cfg: AttackConfig, seed=None) -> AttackResult:
    """Best-over-classes margin attack on a single sample."""
    etas, _, _ = beta_attack_batch(spec, params, np.atleast_2d(x),
                                   np.array([y]), cfg, seed=seed)
    return _result_at(spec, params, np.asarray(x, dtype=np.float64), y, etas[0])


# -- surrogate baselines -------------------------------------------------------


def fgsm(spec: ModelSpec, params: ParamSet, x, y: int,
         cfg: AttackConfig) -> AttackResult:
    """Single epsilon-sized sign step on the cross-entropy gradient."""
    if cfg.norm != "l_inf":
        raise ValueError("fgsm is defined for the l_inf norm only")
    x = np.asarray(x, dtype=np.float64)
    clean_logits = forward_logits(spec, params, x).data[0]
    if zero_one_error(clean_logits, y):
        return _result_at(spec, params, x, y, np.zeros_like(x))
    pert = Tensor(x[None, :], requires_grad=True)
    loss = tsum(cross_entropy(forward_logits(spec, params, pert), np.array([y])))
    loss.backward()
    candidate = x + cfg.epsilon * np.sign(pert.grad[0])
    eta = project(x, candidate, cfg) - x
    return _result_at(spec, params, x, y, eta)


def pgd_surrogate_batch(spec: ModelSpec, params: ParamSet, X: np.ndarray,
                        y: np.ndarray, cfg: AttackConfig, seed=None):
    """Projected ascent on cross-entropy with a random start; returns etas.

    Rows misclassified at the clean point keep eta=0; the others return the
    highest-loss candidate evaluated.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.intp)
    n = X.shape[0]
    rng = _rng(cfg.seed if seed is None else seed)

    def ce_at(points):
        logits = forward_logits(spec, params, points).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        return lse - logits[np.arange(n), y]

    clean_logits = forward_logits(spec, params, X).data
    clean_wrong = np.argmax(clean_logits, axis=1) != y

    best_pts = X.copy()
    best_ce = ce_at(X)
    if cfg.epsilon == 0 or cfg.steps == 0:
        return best_pts - X

    pts = _uniform_start(X, cfg, rng)
    opt = OptimState(cfg.optimizer or "sign_sgd", resolve_step_size(cfg))
    for _ in range(cfg.steps):
        pert = Tensor(pts, requires_grad=True)
        loss = tsum(cross_entropy(forward_logits(spec, params, pert), y))
        loss.backward()
        ce_now = ce_at(pts)
        improved = ce_now > best_ce
        best_ce = np.where(improved, ce_now, best_ce)
        best_pts[improved] = pts[improved]
        pts = project(X, step(opt, pts, pert.grad, direction="ascend"), cfg)
    ce_now = ce_at(pts)
    improved = ce_now > best_ce
    best_pts[improved] = pts[improved]

    etas = best_pts - X
    etas[clean_wrong] = 0.0
    return etas


def pgd_surrogate(spec: ModelSpec, params: ParamSet, x, y: int,
                  cfg: AttackConfig, seed=None) -> AttackResult:
    etas = pgd_surrogate_batch(spec, params, np.atleast_2d(x), np.array([y]),
                               cfg, seed=seed)
    return _result_at(spec, params, np.asarray(x, dtype=np.float64), y, etas[0])


# -- oracles -------------------------------------------------------------------


def closed_form_linear_attack(weight, bias, x, y: int, epsilon: float,
                              norm: str = "l2") -> AttackResult:
    """Exact per-class margin maximizer for a linear model, no box constraint.

    For class j the optimum of (w_j - w_y) . (x + eta) over the ball is
    eta = eps * (w_j - w_y)/||.||_2 (l2) or eps * sign(w_j - w_y) (l_inf).
    """
    if norm not in NORMS:
        raise ValueError(f"unknown norm {norm!r}")
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = int(y)
    k = weight.shape[1]
    best = None
    for j in range(k):
        if j == y:
            continue
        delta = weight[:, j] - weight[:, y]
        if norm == "l2":
            nrm = np.linalg.norm(delta)
            eta = epsilon * delta / nrm if nrm > 0 else np.zeros_like(x)
        else:
            eta = epsilon * np.sign(delta)
        margin = float(delta @ (x + eta) + bias[j] - bias[y])
        if best is None or margin > best[0]:
            best = (margin, j, eta)
    margin, j_star, eta = best
    logits = (x + eta) @ weight + bias
    margins = logits - logits[y]
    return AttackResult(eta_star=eta, j_star=j_star, margin_value=margin,
                        success=bool(zero_one_error(logits, y)),
                        per_class_margins=margins)


def grid_points(x: np.ndarray, epsilon: float, resolution: int,
                norm: str = "l_inf", box: bool = True) -> np.ndarray:
    """All feasible points of a (2*resolution+1)^d axis grid around x."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    if d > 3:
        raise ValueError("grid oracle is limited to d <= 3")
    if epsilon == 0:
        pts = x[None, :].copy()
    else:
        axes = [x[i] + np.linspace(-epsilon, epsilon, 2 * resolution + 1)
                for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
    if box:
        pts = np.clip(pts, 0.0, 1.0)
    if norm == "l2":
        keep = np.linalg.norm(pts - x, axis=1) <= epsilon * (1 + 1e-12)
        pts = pts[keep]
    return pts


def _grid_eval(spec, params, pts, y, chunk=65536):
    """(errors[n], margins[n, K]) over grid points, evaluated in chunks."""
    outs_err, outs_m = [], []
    for lo in range(0, pts.shape[0], chunk):
        logits = forward_logits(spec, params, pts[lo:lo + chunk]).data
        margins = logits - logits[:, [int(y)]]
        errs = np.argmax(logits, axis=1) != int(y)
        outs_err.append(errs)
        outs_m.append(margins)
    return np.concatenate(outs_err), np.concatenate(outs_m)


def grid_oracle_attack(spec: ModelSpec, params: ParamSet, x, y: int,
                       epsilon: float, resolution: int, norm: str = "l_inf",
                       box: bool = True) -> AttackResult:
    """Exhaustive search: margin-best grid point plus an any-misclassified flag."""
    x = np.asarray(x, dtype=np.float64)
    pts = grid_points(x, epsilon, resolution, norm, box)
    errors, margins = _grid_eval(spec, params, pts, y)
    m = margins.copy()
    m[:, int(y)] = -np.inf
    best_per_pt = m.max(axis=1)
    idx = int(np.argmax(best_per_pt))
    j_star = int(np.argmax(m[idx]))
    return AttackResult(
        eta_star=pts[idx] - x,
        j_star=j_star,
        margin_value=float(best_per_pt[idx]),
        success=bool(errors.any()),
        per_class_margins=margins[idx],
    )


def grid_margin_per_class(spec: ModelSpec, params: ParamSet, x, y: int,
                          epsilon: float, resolution: int, norm: str = "l_inf",
                          box: bool = True):
    """Best grid margin and maximizer for each wrong class separately."""
    x = np.asarray(x, dtype=np.float64)
    pts = grid_points(x, epsilon, resolution, norm, box)
    _, margins = _grid_eval(spec, params, pts, y)
    out = {}
    for j in range(spec.class_count):
        if j == int(y):
            continue
        idx = int(np.argmax(margins[:, j]))
        out[j] = (pts[idx] - x, float(margins[idx, j]))
    return out


def grid_max_cross_entropy(spec: ModelSpec, params: ParamSet, x, y: int,
                           epsilon: float, resolution: int, norm: str = "l_inf",
                           box: bool = True):
    """Grid maximizer of the cross-entropy surrogate; (eta, loss value)."""
    x = np.asarray(x, dtype=np.float64)
    pts = grid_points(x, epsilon, resolution, norm, box)
    ces = []
    for lo in range(0, pts.shape[0], 65536):
        logits = forward_logits(spec, params, pts[lo:lo + 65536]).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        ces.append(lse - logits[:, int(y)])
    ces = np.concatenate(ces)
    idx = int(np.argmax(ces))
    return pts[idx] - x, float(ces[idx])
