"""JSON round-trip for fits and simulation sidecars."""

import json
from pathlib import Path

import numpy as np

from .em import CgFit, PosteriorMoments
from .texture import FAMILIES, Exponential, TextureParams

__all__ = ["FitFormatError", "texture_to_dict", "texture_from_dict", "fit_to_dict",
           "fit_from_dict", "save_fit", "load_fit", "dump_json"]


class FitFormatError(ValueError):
    """A fit file is unreadable or does not describe a valid fit."""


def dump_json(obj, path) -> None:
    # Python floats serialize with the shortest repr that round-trips exactly
    text = json.dumps(obj, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def texture_to_dict(t: TextureParams) -> dict:
    if isinstance(t, Exponential):
        return {"family": t.family, "lambda": t.lam}
    return {"family": t.family, "alpha": t.alpha, "beta": t.beta}


def texture_from_dict(d: dict) -> TextureParams:
    cls = FAMILIES[d["family"]]
    if cls is Exponential:
        return Exponential(float(d["lambda"]))
    return cls(float(d["alpha"]), float(d["beta"]))


def fit_to_dict(fit: CgFit) -> dict:
    return {
        "family": fit.family,
        "mu": fit.mu.tolist(),
        "sigma": fit.sigma.tolist(),
        "texture": texture_to_dict(fit.texture),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "K": fit.K,
        "N": fit.N,
        "loglik": fit.loglik,
        "llv": fit.llv,
        "meta": dict(fit.meta),
        "trace": [list(r) for r in fit.trace],
        "posterior": {
            "e_z": fit.posterior.e_z.tolist(),
            "e_inv_z": fit.posterior.e_inv_z.tolist(),
            "e_ln_z": fit.posterior.e_ln_z.tolist(),
        },
    }


def fit_from_dict(d: dict) -> CgFit:
    texture = texture_from_dict(d["texture"])
    if texture.family != d["family"]:
        raise ValueError("texture family disagrees with the fit family")
    mu = np.asarray(d["mu"], dtype=float)
    sigma = np.asarray(d["sigma"], dtype=float)
    if mu.ndim != 1 or sigma.shape != (mu.size, mu.size):
        raise ValueError("mu and sigma shapes disagree")
    post = d["posterior"]
    return CgFit(
        family=d["family"],
        mu=mu,
        sigma=sigma,
        texture=texture,
        posterior=PosteriorMoments(post["e_z"], post["e_inv_z"], post["e_ln_z"]),
        trace=tuple((int(i), float(p), float(ll)) for i, p, ll in d["trace"]),
        iterations=int(d["iterations"]),
        converged=bool(d["converged"]),
        K=int(d["K"]),
        N=int(d["N"]),
        loglik=float(d["loglik"]),
        llv=float(d["llv"]),
        meta={str(k): str(v) for k, v in d.get("meta", {}).items()},
    )


def save_fit(fit: CgFit, path) -> None:
    dump_json(fit_to_dict(fit), path)


def load_fit(path) -> CgFit:
    """Read a fit written by ``save_fit``; any defect raises FitFormatError naming the file."""
    path = Path(path)
    try:
        return fit_from_dict(json.loads(path.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise
    except (OSError, ValueError, KeyError, TypeError, AttributeError) as exc:
        raise FitFormatError(f"{path}: not a valid fit file ({exc})") from exc
