"""Partially-blocked-lane scenario: 2oo3 braking reaction, collision speed and injury.

All functions are vectorised over numpy arrays and registered with the
network function library under ``hs1.*`` names.
"""

from dataclasses import dataclass, field
from importlib import resources
import json

import numpy as np
from scipy.special import expit

from .bayesnet import register_function, register_injury_model
from .errors import ValidationError
from .risk import InjuryLevel

DEFAULT_DECELERATION = 7.0  # m/s^2
INTRUSION_THRESHOLD = 1.0  # m

# Synthetic logistic coefficients (intercept, slope per m/s of delta-v).
# Shaped like published frontal / rear-end risk curves but NOT fitted to
# accident data; for tests and the reference scenario only.
SYNTHETIC_COEFFICIENTS = {
    "I1+": {"host": (-3.0, 0.30), "target": (-3.2, 0.28)},
    "I2+": {"host": (-6.0, 0.25), "target": (-6.5, 0.22)},
    "I3": {"host": (-8.5, 0.25), "target": (-9.0, 0.24)},
}


@dataclass(frozen=True)
class Hs1Params:
    v0: float
    t_react: float
    margin: float  # control-error safety margin in the safe distance
    control_error: float  # actual control error
    detection: tuple = (np.inf, np.inf, np.inf)  # per channel, m
    a: float = DEFAULT_DECELERATION
    m_host: float = 1800.0
    m_target: float = 1500.0
    intrusion_threshold: float = INTRUSION_THRESHOLD

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError("brake deceleration must be positive")
        if self.v0 < 0 or self.t_react < 0 or self.margin < 0 or self.control_error < 0:
            raise ValidationError("velocity, reaction delay, margin and control error must be >= 0")
        if not (self.m_host > 0 and self.m_target > 0):
            raise ValidationError("masses must be positive")
        if len(self.detection) != 3:
            raise ValidationError("exactly three detection channels")


def safe_distance(v0, a=DEFAULT_DECELERATION, t_react=0.0, margin=0.0):
    v0 = np.asarray(v0, dtype=float)
    return v0 * v0 / (2.0 * a) + v0 * t_react + margin


def trigger_distance(d_safe, d_detection):
    return np.minimum(d_safe, d_detection)


def voter_trigger(d1, d2, d3):
    """Middle of three trigger distances (2-out-of-3 vote)."""
    d1, d2, d3 = np.broadcast_arrays(*(np.asarray(d, dtype=float) for d in (d1, d2, d3)))
    return np.maximum(np.minimum(d1, d2), np.minimum(np.maximum(d1, d2), d3))


def brake_start_distance(d_2oo3, v0, t_react, control_error):
    return np.asarray(d_2oo3, dtype=float) - np.asarray(v0, dtype=float) * t_react - control_error


def collision_speed(v0, d_brake, a=DEFAULT_DECELERATION):
    """Impact speed after braking from ``d_brake`` metres before the obstacle.

    Full speed when braking starts at or past the obstacle, zero when the
    vehicle stops short of it.
    """
    v0, d_brake = np.broadcast_arrays(np.asarray(v0, dtype=float), np.asarray(d_brake, dtype=float))
    stop = v0 * v0 / (2.0 * a)
    with np.errstate(invalid="ignore"):
        partial = np.sqrt(np.clip(v0 * v0 - 2.0 * a * d_brake, 0.0, None))
    out = np.where(d_brake <= 0, v0, np.where(d_brake >= stop, 0.0, np.minimum(partial, v0)))
    return out[()] if out.ndim == 0 else out


def gated_collision_speed(v0, d_brake, intrusion_depth, a=DEFAULT_DECELERATION,
                          intrusion_threshold=INTRUSION_THRESHOLD):
    """Collision speed, zero when the intruder leaves enough room to pass."""
    v = collision_speed(v0, d_brake, a)
    out = np.where(np.asarray(intrusion_depth) < intrusion_threshold, 0.0, v)
    return out[()] if out.ndim == 0 else out


def delta_v_split(v_crash, m_host, m_target):
    """Velocity changes of host and target in a perfectly inelastic collision."""
    v_crash = np.asarray(v_crash, dtype=float)
    m_host, m_target = np.asarray(m_host, dtype=float), np.asarray(m_target, dtype=float)
    total = m_host + m_target
    # the larger share is computed directly and the smaller as the remainder;
    # that subtraction is exact (Sterbenz), so the pair sums to v_crash exactly
    host_larger = m_target >= m_host
    larger = v_crash * np.where(host_larger, m_target, m_host) / total
    smaller = v_crash - larger
    dv_host = np.where(host_larger, larger, smaller)
    dv_target = np.where(host_larger, smaller, larger)
    if dv_host.ndim == 0:
        return dv_host[()], dv_target[()]
    return dv_host, dv_target


def logistic_injury(dv, coefficients):
    b0, b1 = coefficients
    return expit(b0 + b1 * np.asarray(dv, dtype=float))


def combined_injury(p_host, p_target):
    """Probability that at least one participant is injured (independent given delta-v)."""
    return p_host + p_target - p_host * p_target


@dataclass(frozen=True)
class InjuryModelSpec:
    coefficients: dict = field(default_factory=lambda: SYNTHETIC_COEFFICIENTS)
    synthetic: bool = True

    def __post_init__(self):
        coefs = {}
        for level, roles in self.coefficients.items():
            level = InjuryLevel.parse(level).value
            try:
                pair = {r: (float(roles[r][0]), float(roles[r][1])) for r in ("host", "target")}
            except (KeyError, TypeError, IndexError):
                raise ValidationError(f"injury level {level}: need (intercept, slope) for host and target") from None
            for role, (_, slope) in pair.items():
                if not slope > 0:
                    raise ValidationError(f"injury level {level} {role}: slope must be positive, got {slope}")
            coefs[level] = pair
        object.__setattr__(self, "coefficients", coefs)

    def probability(self, level, v_crash, m_host, m_target):
        level = InjuryLevel.parse(level).value
        if level not in self.coefficients:
            raise ValidationError(f"no injury coefficients for {level}")
        roles = self.coefficients[level]
        dv_host, dv_target = delta_v_split(v_crash, m_host, m_target)
        p = combined_injury(logistic_injury(dv_host, roles["host"]), logistic_injury(dv_target, roles["target"]))
        # no collision, no injury
        return np.where(np.asarray(v_crash) > 0, p, 0.0)


def hs1_reaction(params, intrusion_depth):
    """Collision speed for one parameter set through the full braking chain."""
    p = params
    d_safe = safe_distance(p.v0, p.a, p.t_react, p.margin)
    triggers = [trigger_distance(d_safe, d) for d in p.detection]
    d_brake = brake_start_distance(voter_trigger(*triggers), p.v0, p.t_react, p.control_error)
    return gated_collision_speed(p.v0, d_brake, intrusion_depth, p.a, p.intrusion_threshold)


def reference_scenario():
    """The shipped reference scenario spec (synthetic parameters) as a dict."""
    text = resources.files("hazardrisk").joinpath("data/hs1_reference.json").read_text(encoding="utf-8")
    return json.loads(text)


# -- registration -----------------------------------------------------------------

register_function("hs1.safe_distance", lambda v0, a=DEFAULT_DECELERATION, t_react=0.0, margin=0.0:
                  safe_distance(v0, a, t_react, margin))
register_function("hs1.trigger_distance", trigger_distance)
register_function("hs1.voter_trigger", voter_trigger)
register_function("hs1.brake_start_distance", lambda d, v0, e, t_react=0.0:
                  brake_start_distance(d, v0, t_react, e))
register_function("hs1.collision_speed", lambda v0, d_brake, a=DEFAULT_DECELERATION:
                  collision_speed(v0, d_brake, a))
register_function("hs1.gated_collision_speed", gated_collision_speed)
register_function("hs1.delta_v_host", lambda v, m_host, m_target: delta_v_split(v, m_host, m_target)[0])
register_function("hs1.delta_v_target", lambda v, m_host, m_target: delta_v_split(v, m_host, m_target)[1])


@register_injury_model("hs1.combined_logistic")
def _combined_logistic(v_crash, m_target, m_host=1800.0, level="I2+", coefficients=None):
    spec = InjuryModelSpec(coefficients) if coefficients else InjuryModelSpec()
    return spec.probability(level, v_crash, m_host, m_target)
