"""
Fit-quality metrics: empirical density, KLD, R^2, LLV, moments, and the
condition-level texture-mean / P_T summaries.
"""

import csv
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .marginal import MarginalModel, log_likelihood, pdf_grid
from .signal import SegmentedSignal
from .texture import InverseGamma, simulate_cg, texture_mean

__all__ = [
    "EmpiricalDensity",
    "ModelScore",
    "EvalReport",
    "build_empdf",
    "kld",
    "r_squared",
    "mardia_kurtosis",
    "moment_report",
    "evaluate_fits",
    "p_t",
    "lambda_and_pt_summary",
    "write_summary_csv",
    "write_grid_csv",
    "KLD_EPS",
]

KLD_EPS = 1e-12


@dataclass(frozen=True)
class EmpiricalDensity:
    """Normalized 2-D histogram; ``mass[i, j]`` covers x-bin i and y-bin j."""

    x_edges: np.ndarray
    y_edges: np.ndarray
    mass: np.ndarray
    total_count: int

    @property
    def centers(self) -> Tuple[np.ndarray, np.ndarray]:
        return 0.5 * (self.x_edges[:-1] + self.x_edges[1:]), 0.5 * (self.y_edges[:-1] + self.y_edges[1:])


def _flat(sig) -> np.ndarray:
    if isinstance(sig, SegmentedSignal):
        return sig.flat()
    return np.atleast_2d(np.asarray(sig, dtype=float))


def build_empdf(sig, bins: int = 100) -> EmpiricalDensity:
    """
    Equal-width 2-D histogram over the data range, normalized to unit mass.

    The range of each channel is widened by 0.1% about its centre so that
    the extreme samples fall inside the outer bins.
    """
    y = _flat(sig)
    if y.shape[1] != 2:
        raise ValueError("the empirical density grid needs exactly two channels")
    if bins < 2:
        raise ValueError("bins must be at least 2")
    if len(y) < bins * bins / 100:
        warnings.warn(f"only {len(y)} samples for a {bins}x{bins} histogram", stacklevel=2)
    edges = []
    for c in range(2):
        lo, hi = y[:, c].min(), y[:, c].max()
        if hi <= lo:
            raise ValueError(f"channel {c} is constant; cannot build a histogram")
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * 1.001
        edges.append(np.linspace(mid - half, mid + half, bins + 1))
    counts, _, _ = np.histogram2d(y[:, 0], y[:, 1], bins=edges)
    return EmpiricalDensity(edges[0], edges[1], counts / counts.sum(), int(len(y)))


def _check_shape(emp, model_mass):
    q2 = np.asarray(model_mass, dtype=float)
    if q2.shape != emp.mass.shape:
        raise ValueError(f"model grid {q2.shape} does not match histogram {emp.mass.shape}")
    return q2


def kld(emp: EmpiricalDensity, model_mass) -> float:
    """
    D_KL(empdf || model) over the grid.

    Both grids are renormalized to unit mass; model mass is floored at
    ``KLD_EPS``; bins with zero empirical mass contribute nothing.
    """
    q2 = _check_shape(emp, model_mass)
    if np.any(q2 < 0) or q2.sum() <= 0:
        raise ValueError("model mass must be non-negative with positive total")
    q1 = emp.mass / emp.mass.sum()
    q2 = np.maximum(q2 / q2.sum(), KLD_EPS)
    nz = q1 > 0
    # rounding can push an exact-zero divergence a hair below 0
    return max(0.0, float(np.sum(q1[nz] * np.log(q1[nz] / q2[nz]))))


def r_squared(emp: EmpiricalDensity, model_mass) -> float:
    """Coefficient of determination of the model grid against the histogram."""
    q2 = _check_shape(emp, model_mass)
    q1 = emp.mass
    ss_tot = float(np.sum((q1 - q1.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("flat histogram: R^2 is undefined")
    return 1.0 - float(np.sum((q1 - q2) ** 2)) / ss_tot


def mardia_kurtosis(y) -> float:
    """Mardia's multivariate kurtosis b_{2,d}, using the 1/T covariance."""
    y = np.asarray(y, dtype=float)
    r = y - y.mean(axis=0)
    S = r.T @ r / len(y)
    w = np.linalg.solve(np.linalg.cholesky(S), r.T)
    return float(np.mean(np.sum(w * w, axis=0) ** 2))


def _data_moments(sig) -> dict:
    y = _flat(sig)
    return {
        "mean": y.mean(axis=0).tolist(),
        "covariance": np.atleast_2d(np.cov(y, rowvar=False)).tolist(),
        "mardia_kurtosis": mardia_kurtosis(y),
    }


def moment_report(fit, sig, mc_samples: int = 10**6, seed=0) -> Dict[str, dict]:
    """
    Mean, covariance and Mardia kurtosis of the data and of the fitted model.

    Model mean and covariance are analytic (``mu`` and ``E[z] * Sigma``);
    the model kurtosis is estimated from ``mc_samples`` seeded draws, and is
    None when the fitted model has no finite fourth moment.

    Raises
    ------
    ValueError
        Inverse-gamma texture with ``alpha <= 1`` (no finite covariance).
    """
    data = _data_moments(sig)
    scale = texture_mean(fit.texture)
    kurt = None
    if _finite_fourth_moment(fit.texture):
        draws = simulate_cg(fit.texture, fit.mu, fit.sigma, K=int(mc_samples), N=1, seed=seed)
        kurt = mardia_kurtosis(draws.flat())
    model = {
        "mean": np.asarray(fit.mu).tolist(),
        "covariance": (scale * np.asarray(fit.sigma)).tolist(),
        "mardia_kurtosis": kurt,
    }
    return {"empdf": data, "model": model}


def _texture_mean_or_none(texture) -> Optional[float]:
    # heavy inverse-gamma fits (alpha <= 1) have no finite mean
    if isinstance(texture, InverseGamma) and texture.alpha <= 1:
        return None
    return texture_mean(texture)


def _finite_fourth_moment(texture) -> bool:
    return not (isinstance(texture, InverseGamma) and texture.alpha <= 2)


def p_t(fit) -> float:
    """
    Root of the summed per-channel model variances, diag(E[z] Sigma).

    Raises ValueError when the texture mean is infinite.
    """
    return float(np.sqrt(texture_mean(fit.texture) * np.trace(np.asarray(fit.sigma))))


@dataclass
class ModelScore:
    kld: float
    r2: float
    llv: float
    mean: list
    covariance: Optional[list]
    mardia_kurtosis: Optional[float]
    lambda_summary: Optional[float]
    p_t: Optional[float]


@dataclass
class EvalReport:
    empdf: dict
    models: Dict[str, ModelScore] = field(default_factory=dict)
    bins: int = 100
    total_count: int = 0

    def ranking(self, metric: str) -> List[str]:
        """Families ordered best first (lowest KLD, highest R^2 / LLV)."""
        reverse = metric != "kld"
        return sorted(self.models, key=lambda f: getattr(self.models[f], metric), reverse=reverse)

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "total_count": self.total_count,
            "empdf": self.empdf,
            "models": {f: asdict(s) for f, s in self.models.items()},
            "ranking": {m: self.ranking(m) for m in ("kld", "r2", "llv")},
        }


def evaluate_fits(fits: Dict[str, object], sig: SegmentedSignal, bins: int = 100,
                  mc_samples: int = 10**6, seed=0, grids: Optional[dict] = None) -> EvalReport:
    """
    Score fitted models against the data they were fitted to.

    Moments that the fitted model does not have (heavy inverse-gamma
    tails) are reported as None.

    ``grids``, when given, receives ``family -> (empdf, model_mass)`` for
    writing plot-ready files.
    """
    emp = build_empdf(sig, bins)
    report = None
    for family, fit in fits.items():
        if np.asarray(fit.mu).shape[0] != sig.d:
            raise ValueError(f"fit {family!r} has dimension {np.asarray(fit.mu).shape[0]}, data has {sig.d}")
        model = MarginalModel.from_fit(fit)
        mm = pdf_grid(model, emp.x_edges, emp.y_edges)
        try:
            moments = moment_report(fit, sig, mc_samples=mc_samples, seed=seed)
        except ValueError:
            moments = {"empdf": _data_moments(sig),
                       "model": {"mean": np.asarray(fit.mu).tolist(), "covariance": None, "mardia_kurtosis": None}}
        if report is None:
            report = EvalReport(empdf=moments["empdf"], bins=bins, total_count=emp.total_count)
        report.models[family] = ModelScore(
            kld=kld(emp, mm),
            r2=r_squared(emp, mm),
            llv=log_likelihood(model, sig),
            lambda_summary=_texture_mean_or_none(fit.texture),
            p_t=None if _texture_mean_or_none(fit.texture) is None else p_t(fit),
            **moments["model"],
        )
        if grids is not None:
            grids[family] = (emp, mm)
    if report is None:
        raise ValueError("no fits to evaluate")
    return report


def lambda_and_pt_summary(entries: Iterable[Tuple[str, str, object]]) -> List[dict]:
    """
    Group fits by ``(condition, label)`` and average texture mean and P_T.

    Parameters
    ----------
    entries : iterable of (condition, label, fit)
        Condition and label are opaque strings, e.g. ``("isotonic", "6kg")``.

    Returns
    -------
    list of dict
        One row per group in first-seen order, keys
        ``condition, label, lambda, p_t``.
    """
    groups: Dict[Tuple[str, str], list] = {}
    for condition, label, fit in entries:
        groups.setdefault((str(condition), str(label)), []).append(fit)
    if not groups:
        raise ValueError("no fits to summarize")
    rows = []
    for (condition, label), fits in groups.items():
        rows.append({
            "condition": condition,
            "label": label,
            "lambda": float(np.mean([texture_mean(f.texture) for f in fits])),
            "p_t": float(np.mean([p_t(f) for f in fits])),
        })
    return rows


def write_summary_csv(rows: List[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["condition", "label", "lambda", "p_t"])
        for r in rows:
            w.writerow([r["condition"], r["label"], repr(r["lambda"]), repr(r["p_t"])])


def write_grid_csv(emp: EmpiricalDensity, model_mass, path) -> None:
    """Plot-ready long table: x_center, y_center, empdf_mass, model_mass."""
    xc, yc = emp.centers
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_center", "y_center", "empdf_mass", "model_mass"])
        for i, x in enumerate(xc):
            for j, y in enumerate(yc):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(emp.mass[i, j])),
                            repr(float(model_mass[i, j]))])
