"""Refit the entitativity model from perception-study responses.

Study rows hold one participant's four item ratings for one stimulus (a GP
vector). ``refit_pipeline`` averages per stimulus, combines the items with
their first principal component, normalizes the resulting labels and fits
linear maps from GP to the label and to each item.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from entikit.core import FEATURE_NAMES, GP_NAMES, EntitativityModel, ParamBox, DEFAULT_BOX
from entikit.errors import (
    DegenerateDataError,
    EntikitError,
    InsufficientDataError,
    InvalidInputError,
    SingularDesignError,
)

MIN_STIMULI = 6
DEFAULT_SCALE = (1.0, 6.0)
REVERSE_KEYED = (0, 2)  # friendliness, comfort


@dataclass(frozen=True)
class StudyDataset:
    """Participant responses; row k rated stimulus ``stimulus_ids[k]``."""

    participant_ids: np.ndarray
    stimulus_ids: np.ndarray
    gp: np.ndarray          # (n, 4)
    responses: np.ndarray   # (n, 4), FEATURE_NAMES order
    scale: tuple[float, float] = DEFAULT_SCALE

    def __post_init__(self):
        gp = np.asarray(self.gp, dtype=float).reshape(-1, 4)
        resp = np.asarray(self.responses, dtype=float).reshape(-1, 4)
        n = gp.shape[0]
        if resp.shape[0] != n:
            raise InvalidInputError(f"{n} GP rows but {resp.shape[0]} response rows")
        if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(resp))):
            raise InvalidInputError("study values must be finite")
        pid = np.asarray(self.participant_ids).reshape(-1)
        sid = np.asarray(self.stimulus_ids).reshape(-1)
        if pid.shape[0] != n or sid.shape[0] != n:
            raise InvalidInputError("id columns must match the number of rows")
        if not self.scale[0] < self.scale[1]:
            raise InvalidInputError(f"scale bounds {self.scale} are not increasing")
        object.__setattr__(self, "gp", gp)
        object.__setattr__(self, "responses", resp)
        object.__setattr__(self, "participant_ids", pid)
        object.__setattr__(self, "stimulus_ids", sid)
        object.__setattr__(self, "scale", (float(self.scale[0]), float(self.scale[1])))

    def __len__(self):
        return self.gp.shape[0]

    @property
    def n_stimuli(self) -> int:
        return len(np.unique(self.stimulus_ids))


@dataclass(frozen=True)
class FitDiagnostics:
    r2: float
    f: float
    p: float
    df_model: int
    df_resid: int


@dataclass(frozen=True)
class OLSResult:
    coefficients: np.ndarray
    r2: float
    f: float
    p: float
    df_model: int
    df_resid: int
    residuals: np.ndarray = field(repr=False)

    @property
    def diagnostics(self) -> FitDiagnostics:
        return FitDiagnostics(self.r2, self.f, self.p, self.df_model, self.df_resid)


@dataclass(frozen=True)
class ModelBundle:
    """Everything the forward model needs, plus how well each map fit."""

    pca_loadings: np.ndarray
    explained_variance_ratio: float
    coefficients: np.ndarray                 # A, intercept first
    feature_matrix: np.ndarray               # (4, 5)
    entitativity_fit: FitDiagnostics
    feature_fits: tuple[FitDiagnostics, ...]
    n_stimuli: int = 0

    def to_model(self, name: str = "refit") -> EntitativityModel:
        return EntitativityModel(loadings=tuple(self.pca_loadings),
                                 coefficients=tuple(self.coefficients),
                                 feature_matrix=tuple(tuple(r) for r in self.feature_matrix),
                                 name=name)


# ------------------------------------------------------------ statistics


def average_by_stimulus(dataset: StudyDataset) -> StudyDataset:
    """One row per stimulus holding the mean GP and mean item responses."""
    ids, inverse = np.unique(dataset.stimulus_ids, return_inverse=True)
    counts = np.bincount(inverse).astype(float)[:, None]
    gp = np.zeros((len(ids), 4))
    resp = np.zeros((len(ids), 4))
    np.add.at(gp, inverse, dataset.gp)
    np.add.at(resp, inverse, dataset.responses)
    return StudyDataset(participant_ids=np.full(len(ids), -1), stimulus_ids=ids,
                        gp=gp / counts, responses=resp / counts, scale=dataset.scale)


def pca_first_component(features) -> tuple[np.ndarray, float]:
    """Unit loading vector of the leading principal axis and its variance share.

    The sign is fixed so the creepiness loading is positive.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 rows for PCA")
    C = np.cov(X, rowvar=False)
    total = float(np.trace(C))
    if not total > 0:
        raise DegenerateDataError("features have zero variance")
    w, V = np.linalg.eigh(C)
    v = V[:, -1]
    v = v / np.linalg.norm(v)
    if v[1] < 0:
        v = -v
    return v, float(np.clip(w[-1] / total, 0.0, 1.0))


def _betacf(a: float, b: float, x: float) -> float:
    # Lentz continued fraction for the regularized incomplete beta
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 1000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, d1: float, d2: float) -> float:
    """P(F > f) for the F distribution with (d1, d2) degrees of freedom."""
    if math.isnan(f):
        return math.nan
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def ols_fit(X, y) -> OLSResult:
    """Least squares with the usual overall F test.

    ``X`` must already contain the intercept column; ``p`` counts it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = X.shape
    if y.shape[0] != n:
        raise InvalidInputError(f"X has {n} rows but y has {y.shape[0]}")
    if n <= p:
        raise InsufficientDataError(f"need more rows than columns ({n} <= {p})")
    if np.linalg.matrix_rank(X) < p:
        raise SingularDesignError("design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateDataError("response has zero variance")
    r2 = float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    df_model, df_resid = p - 1, n - p
    ss_reg = ss_tot - ss_res
    if df_model == 0:
        f = math.nan
    elif ss_res <= 1e-30 * ss_tot:
        f = math.inf
    else:
        f = (ss_reg / df_model) / (ss_res / df_resid)
    pval = f_survival(f, df_model, df_resid) if df_model else math.nan
    return OLSResult(beta, r2, float(f), float(pval), df_model, df_resid, resid)


def correlation_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise InsufficientDataError("need at least 3 rows for correlations")
    if np.any(np.std(X, axis=0) == 0):
        raise DegenerateDataError("a column has zero variance")
    R = np.corrcoef(X, rowvar=False)
    R = (R + R.T) / 2
    np.fill_diagonal(R, 1.0)
    return R


def reverse_score(items, columns, scale=DEFAULT_SCALE) -> np.ndarray:
    out = np.array(items, dtype=float)
    out[:, list(columns)] = scale[0] + scale[1] - out[:, list(columns)]
    return out


def cronbach_alpha(items, *, reverse=(), scale=DEFAULT_SCALE) -> float:
    """Internal consistency of a respondent x item matrix.

    Columns listed in ``reverse`` are reverse-scored against ``scale`` first.
    """
    X = np.asarray(items, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2 or X.shape[0] < 2:
        raise InsufficientDataError("need at least 2 respondents and 2 items")
    if reverse:
        X = reverse_score(X, reverse, scale)
    k = X.shape[1]
    total_var = float(np.var(X.sum(axis=1), ddof=1))
    if total_var == 0:
        raise DegenerateDataError("total score has zero variance")
    return k / (k - 1) * (1.0 - float(np.sum(np.var(X, axis=0, ddof=1))) / total_var)


def study_alpha(dataset: StudyDataset) -> float:
    """Cronbach's alpha over all response rows, friendliness and comfort reversed."""
    return cronbach_alpha(dataset.responses, reverse=REVERSE_KEYED, scale=dataset.scale)


# ------------------------------------------------------------- pipeline


def _design(gp) -> np.ndarray:
    gp = np.asarray(gp, dtype=float)
    return np.column_stack([np.ones(gp.shape[0]), gp])


def refit_pipeline(dataset: StudyDataset) -> ModelBundle:
    """Average, PCA-combine, normalize and regress; errors name their stage."""

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except InsufficientDataError as exc:
            raise InsufficientDataError(str(exc), stage=name) from exc
        except EntikitError as exc:
            raise type(exc)(f"[{name}] {exc}") from exc

    means = stage("average", average_by_stimulus, dataset)
    if len(means) < MIN_STIMULI:
        raise InsufficientDataError(
            f"{len(means)} distinct stimuli, need at least {MIN_STIMULI}", stage="average")
    loadings, ratio = stage("pca", pca_first_component, means.responses)
    raw = means.responses @ loadings
    span = float(raw.max() - raw.min())
    if not span > 0:
        raise DegenerateDataError("[labels] projected labels are all equal")
    labels = (raw - raw.min()) / span
    X = _design(means.gp)
    ent = stage("entitativity_fit", ols_fit, X, labels)
    rows, diags = [], []
    for j, name in enumerate(FEATURE_NAMES):
        res = stage(f"{name}_fit", ols_fit, X, means.responses[:, j])
        rows.append(res.coefficients)
        diags.append(res.diagnostics)
    return ModelBundle(pca_loadings=loadings, explained_variance_ratio=ratio,
                       coefficients=ent.coefficients, feature_matrix=np.array(rows),
                       entitativity_fit=ent.diagnostics, feature_fits=tuple(diags),
                       n_stimuli=len(means))


# ----------------------------------------------------------- synthesis


def one_at_a_time_stimuli(box: ParamBox = DEFAULT_BOX) -> np.ndarray:
    """Eight stimuli: each parameter at its min then max, others at defaults."""
    lo, hi, d = box.arrays()
    rows = []
    for j in range(len(GP_NAMES)):
        for v in (lo[j], hi[j]):
            g = d.copy()
            g[j] = v
            rows.append(g)
    return np.array(rows)


def synthesize_study(stimuli, mean_responses, *, n_participants: int = 212,
                     per_participant: int = 4, noise: float = 0.05, seed: int = 0,
                     scale=DEFAULT_SCALE) -> StudyDataset:
    """Simulated study: each participant rates a random subset of stimuli.

    Ratings are the stimulus mean plus Gaussian noise of sd ``noise``; every
    stimulus is guaranteed at least one rating.
    """
    stimuli = np.asarray(stimuli, dtype=float)
    mean_responses = np.asarray(mean_responses, dtype=float)
    rng = np.random.default_rng(seed)
    m = stimuli.shape[0]
    k = min(per_participant, m)
    pid, sid = [], []
    for p in range(n_participants):
        chosen = rng.choice(m, size=k, replace=False)
        if p < m:
            chosen[0] = p if p not in chosen[1:] else chosen[0]
        pid.extend([p] * k)
        sid.extend(sorted(chosen.tolist()))
    sid = np.array(sid)
    resp = mean_responses[sid] + rng.normal(0.0, noise, size=(len(sid), 4))
    return StudyDataset(np.array(pid), sid, stimuli[sid], resp, scale)
