"""Time-dependent physical coefficients and the constants built from them.

The model is a charged particle in the plane with Hamiltonian pieces driven
by three scalar functions of time: the mass m(t), the trap frequency
omega(t), and the magnetic field B(t) in symmetric gauge, plus the constant
charge q and the inverse-square coupling C.  Everything downstream (the
transformation chain, the residual operator, the radial propagator) pulls
its coefficients from here, so the evaluators must be cheap, vectorized,
and analytically differentiable.

Natural units throughout: hbar = c = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, NonFinite, OutOfDomain

_FAMILIES = ("constant", "linear", "exponential", "sinusoidal", "polynomial",
             "tabulated")

# Points used when a positivity check has no closed form.
_POSITIVITY_SAMPLES = 1024


@dataclass(frozen=True)
class TimeFunction:
    """One scalar coefficient of time on a fixed span.

    Instances are built through the family constructors (``constant``,
    ``linear``, ...) rather than directly; the constructors validate the
    family parameters and precompute whatever the evaluators need.  Both
    ``value`` and ``derivative`` accept scalars or numpy arrays and are
    pure; out-of-span input raises ``OutOfDomain``.
    """

    family: str
    span: tuple[float, float]
    params: tuple = ()
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        t0, t1 = self.span
        if not (math.isfinite(t0) and math.isfinite(t1) and t0 < t1):
            raise ValueError(f"degenerate span {self.span}")
        if any(not math.isfinite(p) for p in self.params):
            raise NonFinite(f"{self.family} family has non-finite parameters")

    # -- family constructors -------------------------------------------------

    @classmethod
    def constant(cls, value, span):
        return cls("constant", tuple(span), (float(value),))

    @classmethod
    def linear(cls, intercept, slope, span):
        """intercept + slope * t."""
        return cls("linear", tuple(span), (float(intercept), float(slope)))

    @classmethod
    def exponential(cls, base, rate, span):
        """base * exp(rate * t)."""
        return cls("exponential", tuple(span), (float(base), float(rate)))

    @classmethod
    def sinusoidal(cls, amplitude, angular_frequency, span, offset=0.0):
        """offset + amplitude * cos(angular_frequency * t)."""
        return cls("sinusoidal", tuple(span),
                   (float(amplitude), float(angular_frequency), float(offset)))

    @classmethod
    def polynomial(cls, coeffs, span):
        """Polynomial in t with coefficients in ascending order."""
        cs = tuple(float(c) for c in coeffs)
        if not cs:
            raise ValueError("polynomial needs at least one coefficient")
        return cls("polynomial", tuple(span), cs)

    @classmethod
    def tabulated(cls, times, values, span=None):
        """Natural cubic spline through the samples; exact at the nodes.

        The span defaults to the sample range.  Sample times must be
        strictly increasing.
        """
        ts = np.asarray(times, dtype=float)
        vs = np.asarray(values, dtype=float)
        if ts.ndim != 1 or ts.shape != vs.shape or ts.size < 2:
            raise ValueError("tabulated family needs matching 1-d time/value arrays")
        if not np.all(np.diff(ts) > 0):
            raise ValueError("tabulated sample times must be strictly increasing")
        if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(vs))):
            raise NonFinite("tabulated samples contain non-finite entries")
        spline = CubicSpline(ts, vs, bc_type="natural")
        if span is None:
            span = (float(ts[0]), float(ts[-1]))
        return cls("tabulated", tuple(span), tuple(ts) + tuple(vs), spline)

    # -- evaluation -----------------------------------------------------------

    def _check_span(self, t):
        t = np.asarray(t, dtype=float)
        t0, t1 = self.span
        # Allow a hair of slack so adaptive integrators probing the right
        # endpoint do not trip on representation error.
        slack = 1e-12 * max(1.0, abs(t0), abs(t1))
        if np.any(t < t0 - slack) or np.any(t > t1 + slack):
            bad = t[(t < t0 - slack) | (t > t1 + slack)]
            first = float(np.ravel(bad)[0])
            raise OutOfDomain(f"t={first} outside span [{t0}, {t1}]")
        return t

    def value(self, t):
        t = self._check_span(t)
        out = self._raw_value(t)
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"{self.family} evaluation produced non-finite values")
        return out if out.ndim else float(out)

    __call__ = value

    def derivative(self, t):
        t = self._check_span(t)
        out = self._raw_derivative(t)
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"{self.family} derivative produced non-finite values")
        return out if out.ndim else float(out)

    def _raw_value(self, t):
        p = self.params
        if self.family == "constant":
            return np.broadcast_to(p[0], t.shape).copy() if t.ndim else np.asarray(p[0])
        if self.family == "linear":
            return p[0] + p[1] * t
        if self.family == "exponential":
            return p[0] * np.exp(p[1] * t)
        if self.family == "sinusoidal":
            amp, gam, off = p
            return off + amp * np.cos(gam * t)
        if self.family == "polynomial":
            return np.polynomial.polynomial.polyval(t, p)
        return self._spline(t)

    def _raw_derivative(self, t):
        p = self.params
        if self.family == "constant":
            return np.zeros_like(t) if t.ndim else np.asarray(0.0)
        if self.family == "linear":
            return np.broadcast_to(p[1], t.shape).copy() if t.ndim else np.asarray(p[1])
        if self.family == "exponential":
            return p[0] * p[1] * np.exp(p[1] * t)
        if self.family == "sinusoidal":
            amp, gam, off = p
            return -amp * gam * np.sin(gam * t)
        if self.family == "polynomial":
            dcoef = np.polynomial.polynomial.polyder(p)
            return np.polynomial.polynomial.polyval(t, dcoef)
        return self._spline(t, 1)

    # -- sign analysis --------------------------------------------------------

    def minimum_on_span(self):
        """A certified lower bound for the function on its span.

        Closed-form families get an exact minimum (endpoints plus interior
        critical points); the tabulated spline uses its exact piecewise
        roots of the derivative.  This backs the construction-time mass
        positivity check, where between-sample dips must not slip through.
        """
        t0, t1 = self.span
        p = self.params
        if self.family == "constant":
            return p[0]
        if self.family == "linear":
            return min(p[0] + p[1] * t0, p[0] + p[1] * t1)
        if self.family == "exponential":
            # Sign is the sign of the base; magnitude at an endpoint.
            return min(p[0] * math.exp(p[1] * t0), p[0] * math.exp(p[1] * t1))
        if self.family == "sinusoidal":
            amp, gam, off = p
            cands = [t0, t1]
            if gam != 0.0:
                # cos extrema at gam*t = j*pi
                j0 = math.ceil(gam * t0 / math.pi) if gam > 0 else math.ceil(gam * t1 / math.pi)
                j1 = math.floor(gam * t1 / math.pi) if gam > 0 else math.floor(gam * t0 / math.pi)
                cands += [j * math.pi / gam for j in range(j0, j1 + 1)]
            return min(off + amp * math.cos(gam * tc) for tc in cands)
        if self.family == "polynomial":
            dcoef = np.polynomial.polynomial.polyder(p)
            cands = [t0, t1]
            if len(dcoef) > 1 or (len(dcoef) == 1 and dcoef[0] != 0.0):
                roots = np.polynomial.polynomial.polyroots(dcoef) if len(dcoef) > 1 else []
                for r in np.atleast_1d(roots):
                    if abs(r.imag) < 1e-12 and t0 <= r.real <= t1:
                        cands.append(float(r.real))
            vals = np.polynomial.polynomial.polyval(np.asarray(cands), p)
            return float(np.min(vals))
        # tabulated: exact roots of the spline's derivative
        dspl = self._spline.derivative()
        cands = [t0, t1]
        for r in np.atleast_1d(dspl.roots(extrapolate=False)):
            if t0 <= r <= t1:
                cands.append(float(r))
        return float(np.min(self._spline(np.asarray(cands))))


def evaluate(f: TimeFunction, t):
    """Evaluate a time function; thin alias kept for API symmetry."""
    return f.value(t)


def _sample_sign_ok(f, lo, strict):
    """Secondary sampled check backing the closed-form bound."""
    ts = np.linspace(f.span[0], f.span[1], _POSITIVITY_SAMPLES)
    vals = np.asarray(f.value(ts))
    return bool(np.all(vals > 0) if strict else np.all(vals >= lo))


@dataclass(frozen=True)
class CoefficientSet:
    """The full physical input: m(t), omega(t), B(t), q, C.

    The scalar potential is pinned to zero by the gauge choice; the field
    exists only so the assumption is visible at the call sites.  Mass
    positivity and frequency nonnegativity are enforced at construction by
    exact per-family bounds plus a 1024-point sample sweep.
    """

    mass: TimeFunction
    frequency: TimeFunction
    magnetic_field: TimeFunction
    charge: float
    coupling: float
    scalar_potential: float = 0.0

    def __post_init__(self):
        if self.scalar_potential != 0.0:
            raise ValueError("scalar potential is fixed at zero by the gauge choice")
        if not (math.isfinite(self.charge) and math.isfinite(self.coupling)):
            raise NonFinite("charge and coupling must be finite")
        span = self.span
        if span[0] >= span[1]:
            raise ValueError("coefficient spans have an empty intersection")
        if self.mass.minimum_on_span() <= 0.0 or not _sample_sign_ok(self.mass, 0.0, True):
            raise ValueError("nonpositive mass on the configured span")
        if self.frequency.minimum_on_span() < 0.0 or not _sample_sign_ok(self.frequency, 0.0, False):
            raise ValueError("negative frequency on the configured span")

    @property
    def span(self):
        t0 = max(f.span[0] for f in (self.mass, self.frequency, self.magnetic_field))
        t1 = min(f.span[1] for f in (self.mass, self.frequency, self.magnetic_field))
        return (t0, t1)

    def describe(self):
        """Canonical one-line description used in provenance digests."""
        def one(f):
            ps = ",".join(f"{p!r}" for p in f.params)
            return f"{f.family}({ps})@[{f.span[0]!r},{f.span[1]!r}]"
        return (f"m={one(self.mass)};w={one(self.frequency)};"
                f"B={one(self.magnetic_field)};q={self.charge!r};C={self.coupling!r}")


def derived_fields(coeffs: CoefficientSet, t, rho):
    """Physical fields implied by the symmetric-gauge potential.

    Returns (B_z, E_phi) with B_z = B(t) and the induced azimuthal electric
    field E_phi = (1/2) * rho * dB/dt.  E_phi is exactly linear in rho.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    b = coeffs.magnetic_field.value(t)
    bdot = coeffs.magnetic_field.derivative(t)
    e_phi = 0.5 * rho * bdot
    if rho.ndim == 0:
        return float(b), float(e_phi)
    return b, e_phi


def frame_rotation_rate(coeffs: CoefficientSet, t):
    """Angular rate q*B/(4m) of the frame rotation that cancels the
    velocity-dependent cross term.

    This single definition feeds the rotation angle quadrature, the
    residual operator's cross term, and the radial sector shift, so the
    three stay mutually consistent by construction.
    """
    return coeffs.charge * coeffs.magnetic_field.value(t) / (4.0 * coeffs.mass.value(t))


def effective_frequency_sq(coeffs: CoefficientSet, t):
    """omega^2 + q^2 B^2 / (4 m^2): the trap frequency squared after the
    magnetic term is folded in."""
    w = coeffs.frequency.value(t)
    b = coeffs.magnetic_field.value(t)
    m = coeffs.mass.value(t)
    return w * w + (coeffs.charge * b) ** 2 / (4.0 * m * m)


# -- config file scanning -----------------------------------------------------

def parse_sections(text):
    """Parse the key = value config format into nested dicts.

    Returns {section: {key: (raw_value, line_number)}} plus a parallel map
    of section header lines.  The format is deliberately small: section
    headers in brackets, one key = value per line, '#' or ';' comments,
    blank lines.  Anything else is a ConfigError carrying the line number.
    """
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    header_lines: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError("empty section name", lineno)
            if name in sections:
                raise ConfigError(f"duplicate section [{name}]", lineno)
            sections[name] = {}
            header_lines[name] = lineno
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", lineno)
        if current is None:
            raise ConfigError("key = value before any [section]", lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.split("#", 1)[0].split(";", 1)[0].strip()
        if not key:
            raise ConfigError("empty key", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno)
        sections[current][key] = (val, lineno)
    return sections, header_lines


def time_function_from_section(section, items, span, header_line):
    """Build a TimeFunction from one config section.

    ``items`` is the {key: (raw, line)} map for the section; unknown or
    missing keys raise ConfigError with a line number.
    """
    def take(key, required=True):
        if key not in items:
            if required:
                raise ConfigError(f"missing key {key!r} in [{section}]", header_line)
            return None
        return items[key]

    def as_float(key):
        raw, line = items[key]
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not a number", line) from None

    def as_float_list(key):
        raw, line = items[key]
        try:
            return [float(tok) for tok in raw.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"{key} = {raw!r} is not a number list", line) from None

    fam_raw = take("family")
    family, fam_line = fam_raw[0], fam_raw[1]
    known = {"family", "value", "intercept", "slope", "base", "rate",
             "amplitude", "angular_frequency", "offset", "coeffs",
             "times", "values"}
    for key, (_, line) in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line)
    try:
        if family == "constant":
            take("value")
            return TimeFunction.constant(as_float("value"), span)
        if family == "linear":
            take("intercept"), take("slope")
            return TimeFunction.linear(as_float("intercept"), as_float("slope"), span)
        if family == "exponential":
            take("base"), take("rate")
            return TimeFunction.exponential(as_float("base"), as_float("rate"), span)
        if family == "sinusoidal":
            take("amplitude"), take("angular_frequency")
            off = as_float("offset") if "offset" in items else 0.0
            return TimeFunction.sinusoidal(as_float("amplitude"),
                                           as_float("angular_frequency"), span, off)
        if family == "polynomial":
            take("coeffs")
            return TimeFunction.polynomial(as_float_list("coeffs"), span)
        if family == "tabulated":
            take("times"), take("values")
            return TimeFunction.tabulated(as_float_list("times"),
                                          as_float_list("values"), span)
    except (ValueError, NonFinite) as exc:
        raise ConfigError(f"[{section}]: {exc}", header_line) from exc
    raise ConfigError(f"unknown family {family!r} in [{section}]", fam_line)
