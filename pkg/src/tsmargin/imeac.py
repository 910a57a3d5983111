"""Per-machine equal-area analysis over the first post-clearing swing.

A critical machine's swing ends at one of two events on its Kimbark curve
(accelerating power against COI angle):

* DSP: the COI-relative speed returns to zero, the machine is stable;
* DLP: the accelerating power turns positive again while the machine is
  still moving forward, the machine is lost.

Areas are trapezoidal integrals of f over theta, with the interpolated
event point appended as the last node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .swingsim import KimbarkSeries

DSP = "DSP"
DLP = "DLP"
NONE = "none_by_horizon"

STABLE = "stable"
UNSTABLE = "unstable"
UNDETERMINED = "undetermined"

CAPPED_MARGIN = 10.0


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class SwingEvent:
    kind: str
    t: float = math.nan
    theta: float = math.nan
    f: float = math.nan
    omega: float = math.nan
    index: int = -1  # sample index at the start of the bracketing interval

    @property
    def occurred(self) -> bool:
        return self.kind in (DSP, DLP)


@dataclass(frozen=True)
class QuadraticFit:
    a: float
    b: float
    c: float
    theta_dsp: float
    theta_dlp_pred: Optional[float]
    points: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]

    def __call__(self, theta):
        return (self.a * theta + self.b) * theta + self.c

    def residuals(self) -> np.ndarray:
        return np.array([self(th) - f for th, f in self.points])


@dataclass(frozen=True)
class MachineVerdict:
    machine: int
    status: str
    event: SwingEvent
    a_acc: float
    a_dec: float = math.nan
    a_ext: Optional[float] = None
    eta: float = math.nan
    capped: bool = False
    fit: Optional[QuadraticFit] = None

    def to_dict(self) -> dict:
        return {
            "machine": self.machine,
            "status": self.status,
            "kind": self.event.kind,
            "t_event": _num(self.event.t),
            "theta_event_rad": _num(self.event.theta),
            "A_acc": _num(self.a_acc),
            "A_dec": _num(self.a_dec),
            "A_ext": _num(self.a_ext),
            "eta": _num(self.eta),
            "capped": self.capped,
        }


def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return float(x)


def _lerp_fraction(y0: float, y1: float) -> float:
    return y0 / (y0 - y1)


def detect_event(series: KimbarkSeries, t_clear: float | None = None) -> SwingEvent:
    """First DSP or DLP after clearing, located by linear interpolation."""
    c = series.clear_index
    if len(series.t) - c < 2:
        raise AnalysisError("need at least two post-clearing samples")
    w, f, t, th = series.omega, series.f, series.t, series.theta
    for k in range(c, len(t) - 1):
        cand = []
        if w[k] > 0 >= w[k + 1]:
            cand.append((_lerp_fraction(w[k], w[k + 1]), DSP))
        if f[k] < 0 <= f[k + 1] and w[k] > 0:
            s = _lerp_fraction(f[k], f[k + 1])
            if w[k] + s * (w[k + 1] - w[k]) > 0:
                cand.append((s, DLP))
        if cand:
            s, kind = min(cand)
            return SwingEvent(
                kind=kind,
                t=t[k] + s * (t[k + 1] - t[k]),
                theta=th[k] + s * (th[k + 1] - th[k]),
                f=f[k] + s * (f[k + 1] - f[k]),
                omega=w[k] + s * (w[k + 1] - w[k]),
                index=k,
            )
    return SwingEvent(NONE)


def _trapz(theta: np.ndarray, f: np.ndarray) -> float:
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(theta)))


def acceleration_area(series: KimbarkSeries, t_clear: float | None = None) -> float:
    """Integral of f d(theta) over the fault-on samples."""
    c = series.clear_index
    return _trapz(series.theta[:c], series.f[:c])


def deceleration_area(series: KimbarkSeries, event: SwingEvent, t_clear: float | None = None) -> float:
    """Net integral of -f d(theta) from clearing to the event point."""
    if not event.occurred:
        raise AnalysisError("deceleration area needs a DSP or DLP")
    c, k = series.clear_index, event.index
    th = np.append(series.theta[c:k + 1], event.theta)
    f = np.append(series.f[c:k + 1], event.f)
    return -_trapz(th, f)


def _first_root_beyond(a: float, b: float, c: float, x0: float) -> Optional[float]:
    """Smallest root of a x^2 + b x + c beyond x0 at which the polynomial turns non-negative."""
    if a == 0:
        return -c / b if b > 0 and -c / b > x0 else None
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = sorted({q / a, c / q}) if q != 0 else [0.0]
    for r in roots:
        if r > x0 and 2 * a * r + b >= 0:
            return r
    return None


def fit_quadratic(series: KimbarkSeries, event: SwingEvent, t_clear: float | None = None) -> QuadraticFit:
    """Three-point quadratic through the clearing point, the DSP and the peak deceleration."""
    if event.kind != DSP:
        raise AnalysisError("quadratic extension applies to a DSP only")
    c, k = series.clear_index, event.index
    p2 = (float(series.theta[c]), float(series.f[c]))
    p3 = (float(event.theta), float(event.f))
    inner = np.arange(c + 1, k + 1)
    if inner.size == 0:
        raise AnalysisError("no sample strictly between clearing and DSP")
    j = inner[np.argmax(-series.f[inner])]
    p4 = (float(series.theta[j]), float(series.f[j]))
    return quadratic_through(p2, p3, p4)


def quadratic_through(p2, p3, p4) -> QuadraticFit:
    pts = (tuple(map(float, p2)), tuple(map(float, p3)), tuple(map(float, p4)))
    th = np.array([p[0] for p in pts])
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(th[i] - th[j]) <= 1e-12:
                raise AnalysisError("degenerate fit: two points share theta")
    vander = np.vander(th, 3)
    try:
        a, b, c = np.linalg.solve(vander, np.array([p[1] for p in pts]))
    except np.linalg.LinAlgError:
        raise AnalysisError("singular interpolation system") from None
    theta_dsp = pts[1][0]
    f_dsp = (a * theta_dsp + b) * theta_dsp + c
    if f_dsp >= 0:
        pred = theta_dsp
    else:
        pred = _first_root_beyond(a, b, c, theta_dsp)
    return QuadraticFit(float(a), float(b), float(c), theta_dsp, pred, pts)


def extended_area(fit: QuadraticFit) -> float:
    """Closed-form integral of -f_APP from the DSP to the predicted DLP."""
    if fit.theta_dlp_pred is None:
        raise AnalysisError("no predicted DLP beyond the DSP")

    def prim(x):
        return -((fit.a / 3.0 * x + fit.b / 2.0) * x + fit.c) * x

    return float(prim(fit.theta_dlp_pred) - prim(fit.theta_dsp))


def margin(a_acc: float, status: str, a_dec: float | None = None, a_ext: float | None = None) -> float:
    if not a_acc > 0:
        raise AnalysisError("A_acc must be positive (machine never accelerated)")
    if status == UNSTABLE:
        return (a_dec - a_acc) / a_acc
    if status == STABLE:
        return a_ext / a_acc
    raise AnalysisError(f"no margin for status {status!r}")


def analyze_machine(series: KimbarkSeries) -> MachineVerdict:
    """Event, areas and margin for one machine over its first swing."""
    event = detect_event(series)
    a_acc = acceleration_area(series)
    if not event.occurred:
        return MachineVerdict(series.machine, UNDETERMINED, event, a_acc)
    a_dec = deceleration_area(series, event)
    if event.kind == DLP:
        # A_acc = 0 only for a zero-length fault; the ratio is undefined there
        eta = margin(a_acc, UNSTABLE, a_dec=a_dec) if a_acc > 0 else math.nan
        return MachineVerdict(series.machine, UNSTABLE, event, a_acc, a_dec, eta=eta)
    try:
        fit = fit_quadratic(series, event)
    except AnalysisError:
        fit = None
    if fit is None or fit.theta_dlp_pred is None:
        return MachineVerdict(series.machine, STABLE, event, a_acc, a_dec, eta=CAPPED_MARGIN,
                              capped=True, fit=fit)
    a_ext = extended_area(fit)
    if a_acc > 0:
        eta, capped = margin(a_acc, STABLE, a_ext=a_ext), False
    else:
        eta, capped = CAPPED_MARGIN, True
    return MachineVerdict(series.machine, STABLE, event, a_acc, a_dec, a_ext, eta, capped, fit)
