"""Synthetic ground truth, the exhaustive l0 oracle, and mask metrics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig
from .bases import Subspace, make_custom_basis, make_dct2_basis, make_hadamard_basis, make_sinusoid_basis
from .errors import InvalidArgumentError, SizeLimitError
from .motion import FlowField, flow_from_homography, homography_apply
from .operators import DiffOperator, diff_for_shape

ORACLE_MAX_N = 20


@dataclass
class SyntheticInstance:
    x: np.ndarray
    gt_mask: np.ndarray
    gt_comp1: np.ndarray
    gt_comp2: np.ndarray
    gt_alpha1: np.ndarray
    gt_alpha2: np.ndarray
    seed: int
    descriptor: dict = field(default_factory=dict)


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def as_dict(self):
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


@dataclass
class OracleResult:
    mask: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    objective: float


def metrics(pred, gt) -> MetricsReport:
    """Precision, recall and F1 with mask 1-entries as positives.

    Empty denominators give precision = 1 / recall = 1, and F1 = 0 when
    precision + recall = 0.
    """
    pred = np.asarray(pred).ravel() > 0
    gt = np.asarray(gt).ravel() > 0
    if pred.shape != gt.shape:
        raise InvalidArgumentError(f"mask lengths differ: {pred.size} vs {gt.size}")
    tp = int(np.sum(pred & gt))
    fp = int(np.sum(pred & ~gt))
    fn = int(np.sum(~pred & gt))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(tp, fp, fn, precision, recall, f1)


# --- mask models -----------------------------------------------------------


def runs_mask(n, mean_len, density, rng):
    """Alternating runs with geometric lengths.

    Foreground runs have mean ``mean_len``; background runs are scaled so
    the expected foreground fraction is ``density``.
    """
    if not 0 <= density <= 1:
        raise InvalidArgumentError("density must lie in [0, 1]")
    if density == 0 or density == 1:
        return np.full(n, float(density))
    fg_mean = float(mean_len)
    bg_mean = fg_mean * (1 - density) / density
    mask = np.zeros(n)
    state = rng.random() < density
    pos = 0
    while pos < n:
        mean = fg_mean if state else bg_mean
        length = int(rng.geometric(min(1.0, 1.0 / mean)))
        if state:
            mask[pos : pos + length] = 1.0
        pos += length
        state = not state
    return mask


def rects_mask(rows, cols, rng, count=3, density=0.2):
    """Union of random axis-aligned rectangles covering roughly ``density``."""
    mask = np.zeros((rows, cols))
    if density <= 0 or count <= 0:
        return mask.ravel()
    area = density * rows * cols / count
    for _ in range(count):
        aspect = rng.uniform(0.5, 2.0)
        h = int(np.clip(round(np.sqrt(area * aspect)), 1, rows))
        w = int(np.clip(round(area / max(h, 1)), 1, cols))
        r0 = rng.integers(0, rows - h + 1)
        c0 = rng.integers(0, cols - w + 1)
        mask[r0 : r0 + h, c0 : c0 + w] = 1.0
    return mask.ravel()


def glyphs_mask(rows, cols, rng, count=None, stroke=None):
    """Text-like strokes: short horizontal and vertical bars of fixed width."""
    mask = np.zeros((rows, cols))
    stroke = stroke or max(1, min(rows, cols) // 16)
    count = count or max(2, min(rows, cols) // 6)
    for _ in range(count):
        length = rng.integers(max(2, min(rows, cols) // 6), max(3, min(rows, cols) // 2) + 1)
        if rng.random() < 0.5:
            r0 = rng.integers(0, rows - stroke + 1)
            c0 = rng.integers(0, max(1, cols - length + 1))
            mask[r0 : r0 + stroke, c0 : c0 + length] = 1.0
        else:
            r0 = rng.integers(0, max(1, rows - length + 1))
            c0 = rng.integers(0, cols - stroke + 1)
            mask[r0 : r0 + length, c0 : c0 + stroke] = 1.0
    return mask.ravel()


def _compose(p1, p2, mask, rng, coef_scale, seed, descriptor):
    m1 = p1.matrix if isinstance(p1, Subspace) else np.asarray(p1)
    m2 = p2.matrix if isinstance(p2, Subspace) else np.asarray(p2)
    a1 = coef_scale * rng.standard_normal(m1.shape[1])
    a2 = coef_scale * rng.standard_normal(m2.shape[1])
    c1 = m1 @ a1
    c2 = m2 @ a2
    x = (1 - mask) * c1 + mask * c2
    return SyntheticInstance(x, mask, c1, c2, a1, a2, seed, descriptor)


def _parse_model(mask_model):
    if isinstance(mask_model, str):
        return mask_model, {}
    name, params = mask_model
    return name, dict(params)


def gen_masked_1d(n, p1, p2, mask_model=("runs", {"mean_len": 20, "density": 0.3}), seed=0, coef_scale=None):
    """Random 1D masked instance x = (1 - w) * P1 a1 + w * P2 a2.

    Coefficients are standard normal times ``coef_scale`` (default
    sqrt(n), which puts per-sample amplitudes on the scale of unnormalized
    +-1 / unit-amplitude basis vectors with unit coefficients).

    ``mask_model`` is ``("bernoulli", {"p": ...})`` or
    ``("runs", {"mean_len": ..., "density": ...})``.
    """
    for p in (p1, p2):
        rows = p.matrix.shape[0] if isinstance(p, Subspace) else np.asarray(p).shape[0]
        if rows != n:
            raise InvalidArgumentError(f"basis has {rows} rows, expected {n}")
    rng = np.random.default_rng(seed)
    name, params = _parse_model(mask_model)
    if name == "bernoulli":
        mask = (rng.random(n) < params.get("p", 0.3)).astype(float)
    elif name == "runs":
        mask = runs_mask(n, params.get("mean_len", 20), params.get("density", 0.3), rng)
    else:
        raise InvalidArgumentError(f"unknown 1D mask model {name!r}")
    scale = np.sqrt(n) if coef_scale is None else coef_scale
    desc = {"n": n, "mask_model": name, **params, "coef_scale": float(scale)}
    return _compose(p1, p2, mask, rng, scale, seed, desc)


def gen_masked_2d(rows, cols, p1, p2, mask_model=("rects", {}), seed=0, coef_scale=None):
    """2D analogue of :func:`gen_masked_1d` (row-major vectorization).

    Mask models: ``rects`` (``count``, ``density``), ``glyphs``
    (``count``, ``stroke``) and ``bernoulli`` (``p``).
    """
    n = rows * cols
    for p in (p1, p2):
        r = p.matrix.shape[0] if isinstance(p, Subspace) else np.asarray(p).shape[0]
        if r != n:
            raise InvalidArgumentError(f"basis has {r} rows, expected {n}")
    rng = np.random.default_rng(seed)
    name, params = _parse_model(mask_model)
    if name == "rects":
        mask = rects_mask(rows, cols, rng, params.get("count", 3), params.get("density", 0.2))
    elif name == "glyphs":
        mask = glyphs_mask(rows, cols, rng, params.get("count"), params.get("stroke"))
    elif name == "bernoulli":
        mask = (rng.random(n) < params.get("p", 0.2)).astype(float)
    else:
        raise InvalidArgumentError(f"unknown 2D mask model {name!r}")
    scale = np.sqrt(n) if coef_scale is None else coef_scale
    desc = {"rows": rows, "cols": cols, "mask_model": name, **params, "coef_scale": float(scale)}
    return _compose(p1, p2, mask, rng, scale, seed, desc)


# --- exhaustive oracle ------------------------------------------------------


def _best_fit_all_masks(x, basis, weights, k, ridge):
    """Per-mask best residual and coefficients of one component.

    ``weights`` is (n_masks, n) with 0/1 entries selecting the rows this
    component must explain.  With k < M every size-k column subset is tried
    (exact l0-constrained least squares); otherwise plain least squares.
    """
    n_masks = weights.shape[0]
    m = basis.shape[1]
    k = min(k, m)
    best_res = np.full(n_masks, np.inf)
    best_coef = np.zeros((n_masks, m))
    outer = np.einsum("ti,tj->tij", basis, basis)
    xb = basis * x[:, None]
    x2 = weights @ (x * x)
    for cols in itertools.combinations(range(m), k):
        idx = np.array(cols)
        g = np.einsum("mt,tij->mij", weights, outer[:, idx][:, :, idx])
        g += ridge * np.eye(k)
        rhs = weights @ xb[:, idx]
        coef = np.linalg.solve(g, rhs[:, :, None])[:, :, 0]
        # residual = x'Wx - 2 c'b + c'Gc evaluated without the ridge
        fit = np.einsum("mi,mij,mj->m", coef, g - ridge * np.eye(k), coef)
        res = x2 - 2 * np.einsum("mi,mi->m", coef, rhs) + fit
        res = np.maximum(res, 0.0)
        better = res < best_res - 1e-15
        best_res[better] = res[better]
        full = np.zeros((better.sum(), m))
        full[:, idx] = coef[better]
        best_coef[better] = full
    return best_res, best_coef


def exact_objective(x, p1, p2, alpha1, alpha2, w, lambda1, lambda2, d) -> float:
    """Mixed-integer objective: squared error + l1 * ||w||_0 + l2 * ||Dw||_1."""
    m1 = p1.matrix if isinstance(p1, Subspace) else np.asarray(p1)
    m2 = p2.matrix if isinstance(p2, Subspace) else np.asarray(p2)
    dm = d.matrix if isinstance(d, DiffOperator) else d
    w = np.asarray(w, dtype=float)
    r = np.asarray(x) - (1 - w) * (m1 @ alpha1) - w * (m2 @ alpha2)
    return float(0.5 * r @ r + lambda1 * np.count_nonzero(w) + lambda2 * np.abs(dm @ w).sum())


def oracle_solve(x, p1, p2, lambda1, lambda2, k1, k2, d=None, ridge=1e-10) -> OracleResult:
    """Minimize the binary-mask objective by enumerating all 2^n masks.

    For each mask, each component is fit by exact least squares on the
    samples it owns, restricted to the best column subset of size k.
    Ties go to the smaller mask, then to the lexicographically smallest.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n > ORACLE_MAX_N:
        raise SizeLimitError(f"oracle enumerates 2^n masks; n={n} exceeds {ORACLE_MAX_N}")
    m1 = p1.matrix if isinstance(p1, Subspace) else np.asarray(p1, dtype=float)
    m2 = p2.matrix if isinstance(p2, Subspace) else np.asarray(p2, dtype=float)
    if m1.shape[0] != n or m2.shape[0] != n:
        raise InvalidArgumentError("bases do not match signal length")
    if d is None:
        shape = p1.signal_shape if isinstance(p1, Subspace) else (n,)
        d = diff_for_shape(shape)
    dm = d.matrix if isinstance(d, DiffOperator) else d

    # masks in lexicographic order: bit j of the index is sample n-1-j
    codes = np.arange(2**n, dtype=np.int64)
    masks = ((codes[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)

    res1, c1 = _best_fit_all_masks(x, m1, 1.0 - masks, k1, ridge)
    res2, c2 = _best_fit_all_masks(x, m2, masks, k2, ridge)
    l0 = masks.sum(axis=1)
    tv_vals = np.abs(masks @ dm.T.toarray()).sum(axis=1) if hasattr(dm, "toarray") else np.abs(masks @ dm.T).sum(axis=1)
    obj = 0.5 * (res1 + res2) + lambda1 * l0 + lambda2 * tv_vals

    best = obj.min()
    tied = np.flatnonzero(obj <= best + 1e-12 * max(1.0, abs(best)))
    pick = tied[np.lexsort((tied, l0[tied]))[0]]
    mask = masks[pick]
    a1, a2 = c1[pick], c2[pick]
    # report the objective re-evaluated at the chosen point
    value = exact_objective(x, m1, m2, a1, a2, mask, lambda1, lambda2, dm)
    return OracleResult(mask=mask, alpha1=a1, alpha2=a2, objective=value)


def random_homography(rng, shift=3.0, linear=0.05, perspective=1e-3):
    """A mild random homography: small shifts, near-identity linear part, tiny perspective."""
    a = np.array([
        rng.uniform(-shift, shift),
        1 + rng.uniform(-linear, linear),
        rng.uniform(-linear, linear),
        rng.uniform(-shift, shift),
        rng.uniform(-linear, linear),
        1 + rng.uniform(-linear, linear),
        rng.uniform(-perspective, perspective),
        rng.uniform(-perspective, perspective),
    ])
    return a


def gen_outlier_flow(width, height, a, rect, rect_motion, noise_sigma=0.0, seed=0):
    """Homography flow with a rectangle overwritten by a constant translation.

    ``rect`` is ``(x0, y0, w, h)`` in pixel units and ``rect_motion`` the
    (u, v) assigned inside it.  Gaussian noise of std ``noise_sigma`` is added
    to both flow components everywhere.  Returns ``(FlowField, gt_mask)``
    with the mask as a (height, width) 0/1 float array.
    """
    x0, y0, rw, rh = (int(v) for v in rect)
    if rw < 0 or rh < 0 or x0 < 0 or y0 < 0 or x0 + rw > width or y0 + rh > height:
        raise InvalidArgumentError(f"rectangle {rect} is not inside a {width}x{height} grid")
    if noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma must be >= 0")
    base = flow_from_homography(a, width, height)
    u = base.u.copy()
    v = base.v.copy()
    mask = np.zeros((height, width))
    mask[y0 : y0 + rh, x0 : x0 + rw] = 1.0
    u[mask == 1] = rect_motion[0]
    v[mask == 1] = rect_motion[1]
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        u = u + rng.normal(0.0, noise_sigma, u.shape)
        v = v + rng.normal(0.0, noise_sigma, v.shape)
    return FlowField(u, v), mask


def gen_outlier_instance(seed, size=32, area=0.2, offset=4.0, noise_sigma=0.1):
    """Seeded benchmark instance for robust motion estimation.

    A random mild homography over a ``size`` x ``size`` grid; a rectangle
    covering about ``area`` of the grid at a random position moves by the
    global flow at its centre plus ``offset`` pixels in a random direction.
    Returns ``(flow, gt_mask, a_true)``.
    """
    rng = np.random.default_rng(seed)
    a = random_homography(rng)
    rw = int(round(np.sqrt(area * size * size)))
    rh = int(round(area * size * size / rw))
    x0 = int(rng.integers(0, size - rw + 1))
    y0 = int(rng.integers(0, size - rh + 1))
    cx, cy = x0 + (rw - 1) / 2, y0 + (rh - 1) / 2
    nx, ny = homography_apply(a, cx, cy)
    theta = rng.uniform(0, 2 * np.pi)
    motion = (nx - cx + offset * np.cos(theta), ny - cy + offset * np.sin(theta))
    flow, mask = gen_outlier_flow(size, size, a, (x0, y0, rw, rh), motion, noise_sigma, seed)
    return flow, mask, a


# --- benchmark families -----------------------------------------------------

# Solver settings for the oracle-equivalence family, chosen on seeds 1000-1099.
ORACLE_FAMILY_CONFIG = AdmmConfig(
    lambda1=0.1, lambda2=0.1, rho1=0.1, rho2=0.1, k1=2, k2=2, t_max=3, init="p1_residual"
)


def oracle_family_bases(n=10):
    """Bases for small oracle-checkable instances.

    P1 is the first sinusoid pair; P2 is the two highest-frequency 1D DCT
    vectors, so the components are well separated in frequency.
    """
    p1 = make_sinusoid_basis(n, 2)
    p2 = make_custom_basis(make_dct2_basis(1, n, n).matrix[:, -2:])
    return p1, p2


def oracle_family_instance(seed, n=10):
    p1, p2 = oracle_family_bases(n)
    inst = gen_masked_1d(n, p1, p2, ("runs", {"mean_len": 3, "density": 0.3}), seed)
    return inst, p1, p2


def toy_1d_bases(n=256, k=10):
    """Smooth sinusoids against Walsh functions spread over the sequency range."""
    return make_sinusoid_basis(n, k), make_hadamard_basis(n, k, select="spread")


def toy_1d_instance(seed, n=256):
    p1, p2 = toy_1d_bases(n)
    inst = gen_masked_1d(n, p1, p2, ("runs", {"mean_len": 20, "density": 0.3}), seed)
    return inst, p1, p2


def image_block_bases(size=64, k1=40, k2=8):
    return make_dct2_basis(size, size, k1), make_hadamard_basis(size * size, k2, (size, size))


def image_block_instance(seed, size=64, coef_scale=None):
    """Smooth DCT background with glyph-like strokes drawn from a Walsh texture."""
    p1, p2 = image_block_bases(size)
    inst = gen_masked_2d(size, size, p1, p2, ("glyphs", {}), seed, coef_scale)
    return inst, p1, p2
