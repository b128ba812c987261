"""Built-in model zoo.

A/B/C are the constant-coefficient references (attracting, repelling,
neutral); D and B-asym modulate the degeneration coefficient around the
circle; "tilted" adds a drift along the boundary so the stationary
density is not uniform (the ergodic cross-check model).
"""

from __future__ import annotations

from .classifier import ClassificationReport, classify
from .coefficients import Const, Cosine, Fourier
from .fields import ChartModel

_SIN = Fourier(constant=0.0, terms=((1, 0.0, 1.0),))


def _build():
    # keep model definitions in one place; rho defaults to 1 everywhere
    zoo = {
        "A": ChartModel(a=Const(1.0), b=Const(0.0), alpha=Const(1.0),
                        beta=Const(0.0), name="A"),
        "B": ChartModel(a=Const(1.0), b=Const(0.0), alpha=Const(1.0),
                        beta=Const(3.0), name="B"),
        "C": ChartModel(a=Const(1.0), b=Const(0.0), alpha=Const(1.0),
                        beta=Const(1.0), name="C"),
        "D": ChartModel(a=Const(1.0), b=Const(0.0), alpha=Cosine(1.0, 0.5),
                        beta=Const(0.0), name="D"),
        "B-asym": ChartModel(a=Const(1.0), b=Const(0.0), alpha=Cosine(1.0, 0.5),
                             beta=Const(3.0), name="B-asym"),
        "tilted": ChartModel(a=Const(1.0), b=_SIN, alpha=Cosine(1.0, 0.5),
                             beta=Fourier(constant=0.5, terms=((1, 0.0, 0.25),)),
                             name="tilted"),
    }
    return zoo


_ZOO = _build()


def model_names():
    return list(_ZOO)


def get_model(name: str) -> ChartModel:
    if name not in _ZOO:
        raise KeyError(f"unknown model {name!r}; built-ins: {', '.join(_ZOO)}")
    return _ZOO[name]


def catalog(grid_size: int = 512) -> list[tuple[str, ClassificationReport]]:
    """Classify every built-in model."""
    return [(name, classify(m, grid_size=grid_size)) for name, m in _ZOO.items()]
