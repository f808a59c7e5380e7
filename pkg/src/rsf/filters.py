"""The color filter family: per-pixel increment maps and their derivatives.

Every filter is expressed as an increment dF(theta, X) = F(theta, X) - X
evaluated on the stored sRGB values.  All increments are linear in theta
within a sign branch (temperature switches gains at theta = 0), which the
fitter and the closed-form least-squares oracle both exploit.  No clamping
happens here; the renderer applies the final [0, 1] clamp.

Kinds:
  contrast      theta * (X - mean(X)),  mean = scalar over all pixels/channels
  saturation    theta * (X - L),        L = CIELAB L / 100, broadcast per channel
  hue           gain * theta * X on R and G, -gain/2 * theta * X on B
  temperature   sign-dependent per-channel gains (warm raises R and B,
                cool lowers R, G and B)
  shadows       theta * (1 - X)         (tied across RGB, or one channel)
  midtones      theta * (0.25 - (X - 0.5)^2)
  highlights    theta * X
  shift_*       constant theta on one channel
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .color import luminance_grad, luminance_map, require_image


class FilterKind(Enum):
    """Closed set of filter tags.

    shadows/midtones/highlights exist both tied (one theta moves all
    three channels) and per channel; shift is always per channel.
    """

    CONTRAST = "contrast"
    SATURATION = "saturation"
    HUE = "hue"
    TEMPERATURE = "temperature"
    SHADOWS = "shadows"
    MIDTONES = "midtones"
    HIGHLIGHTS = "highlights"
    SHADOWS_R = "shadows_r"
    SHADOWS_G = "shadows_g"
    SHADOWS_B = "shadows_b"
    MIDTONES_R = "midtones_r"
    MIDTONES_G = "midtones_g"
    MIDTONES_B = "midtones_b"
    HIGHLIGHTS_R = "highlights_r"
    HIGHLIGHTS_G = "highlights_g"
    HIGHLIGHTS_B = "highlights_b"
    SHIFT_R = "shift_r"
    SHIFT_G = "shift_g"
    SHIFT_B = "shift_b"

    @property
    def channel(self) -> int | None:
        """0/1/2 for single-channel variants, None for whole-image kinds."""
        name = self.value
        if name.endswith(("_r", "_g", "_b")):
            return {"r": 0, "g": 1, "b": 2}[name[-1]]
        return None

    @property
    def tied(self) -> bool:
        """True for the tri-channel shadows/midtones/highlights variants."""
        return self in (FilterKind.SHADOWS, FilterKind.MIDTONES, FilterKind.HIGHLIGHTS)

    @property
    def is_shift(self) -> bool:
        return self.value.startswith("shift")

    @property
    def order(self) -> int:
        """Canonical sort index (declaration order) for deterministic sums."""
        return _KIND_ORDER[self]


_KIND_ORDER = {kind: i for i, kind in enumerate(FilterKind)}

# The tied filter set used by default recipes: 7 tied kinds; shift is
# handled as a separate global layer.
TIED_KINDS = (
    FilterKind.CONTRAST,
    FilterKind.SATURATION,
    FilterKind.HUE,
    FilterKind.TEMPERATURE,
    FilterKind.SHADOWS,
    FilterKind.MIDTONES,
    FilterKind.HIGHLIGHTS,
)

SHIFT_KINDS = (FilterKind.SHIFT_R, FilterKind.SHIFT_G, FilterKind.SHIFT_B)

DEFAULT_THETA_BOUND = 1.0


def round_robin_kinds(n_layers: int) -> list[list[FilterKind]]:
    """One tied kind per layer, cycling through the tied set.

    This is the identifiable default for fitting: on a single mask the
    contrast, shadows and highlights bases span only {M*X, M}, so giving
    every layer the full tied set makes individual thetas unrecoverable.
    One filter per region map keeps each knob meaningful.
    """
    return [[TIED_KINDS[i % len(TIED_KINDS)]] for i in range(n_layers)]


@dataclass(frozen=True)
class FilterConstants:
    """Fixed gains of the hue and temperature filters.

    Traditional grading tools pick these by taste; defaults are unit
    scale with a half-strength green response on the cool side so that
    cooling meaningfully shifts toward blue.
    """

    hue_gain: float = 1.0
    # (warm R, cool R, cool G, warm B, cool B) branch gains
    temp_gains: tuple[float, float, float, float, float] = (1.0, 1.0, 0.5, 1.0, 1.0)

    def __post_init__(self) -> None:
        if not (self.hue_gain > 0 and np.isfinite(self.hue_gain)):
            raise ValueError(f"hue_gain must be > 0, got {self.hue_gain}")
        gains = tuple(float(g) for g in self.temp_gains)
        if len(gains) != 5 or any(not (g > 0 and np.isfinite(g)) for g in gains):
            raise ValueError(f"temp_gains must be 5 positive reals, got {self.temp_gains}")
        object.__setattr__(self, "temp_gains", gains)

    def to_json(self) -> dict:
        return {"hue_gain": self.hue_gain, "temp_gains": list(self.temp_gains)}

    @classmethod
    def from_json(cls, obj: dict) -> "FilterConstants":
        unknown = set(obj) - {"hue_gain", "temp_gains"}
        if unknown:
            raise ValueError(f"constants: unknown field {sorted(unknown)[0]!r}")
        return cls(
            hue_gain=float(obj.get("hue_gain", 1.0)),
            temp_gains=tuple(obj.get("temp_gains", (1.0, 1.0, 0.5, 1.0, 1.0))),
        )


@dataclass(frozen=True)
class FilterArg:
    """One human-readable knob: a filter kind and its scalar strength."""

    kind: FilterKind
    theta: float
    bound: float = field(default=DEFAULT_THETA_BOUND, compare=False)

    def __post_init__(self) -> None:
        if not np.isfinite(self.theta):
            raise ValueError(f"{self.kind.value}: non-finite theta")
        if abs(self.theta) > self.bound + 1e-12:
            raise ValueError(
                f"{self.kind.value}: theta {self.theta} outside [-{self.bound}, {self.bound}]"
            )


def _temp_channel_gains(consts: FilterConstants, positive: bool) -> np.ndarray:
    t1, t2, t3, t4, t5 = consts.temp_gains
    return np.array([t1, 0.0, t4]) if positive else np.array([t2, t3, t5])


def filter_unit_increment(
    kind: FilterKind,
    img: np.ndarray,
    consts: FilterConstants,
    image_mean: float,
    lum: np.ndarray,
    temp_positive: bool = True,
) -> np.ndarray:
    """Increment per unit theta: dF(theta, X) / theta for the active branch.

    Because every expression is theta-linear per sign branch this single
    buffer serves as increment/theta, d(increment)/d(theta), and the basis
    vector of the least-squares oracle.  ``temp_positive`` selects the
    temperature branch (the theta >= 0 branch doubles as the theta = 0
    subgradient choice).
    """
    x = img
    if kind is FilterKind.CONTRAST:
        return x - image_mean
    if kind is FilterKind.SATURATION:
        return x - lum[..., None]
    if kind is FilterKind.HUE:
        return consts.hue_gain * x * np.array([1.0, 1.0, -0.5])
    if kind is FilterKind.TEMPERATURE:
        return x * _temp_channel_gains(consts, temp_positive)
    out = np.zeros_like(x)
    ch = kind.channel
    if kind.is_shift:
        out[..., ch] = 1.0
        return out
    base = kind.value.split("_")[0]
    if base == "shadows":
        expr = 1.0 - x
    elif base == "midtones":
        expr = 0.25 - (x - 0.5) ** 2
    elif base == "highlights":
        expr = x
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown filter kind {kind!r}")
    if ch is None:
        return expr
    out[..., ch] = expr[..., ch]
    return out


def filter_increment(
    kind: FilterKind,
    theta: float,
    img: np.ndarray,
    consts: FilterConstants,
    image_mean: float,
    lum: np.ndarray,
) -> np.ndarray:
    """dF(theta, X) as an (H, W, 3) buffer; untouched channels are zero."""
    if not np.isfinite(theta):
        raise ValueError(f"{kind.value}: non-finite theta")
    if theta == 0.0:
        return np.zeros_like(img)
    unit = filter_unit_increment(kind, img, consts, image_mean, lum, theta >= 0.0)
    return theta * unit


def filter_dtheta(
    kind: FilterKind,
    theta: float,
    img: np.ndarray,
    consts: FilterConstants,
    image_mean: float,
    lum: np.ndarray,
) -> np.ndarray:
    """Analytic d(dF)/d(theta); temperature at theta = 0 uses the warm branch."""
    if not np.isfinite(theta):
        raise ValueError(f"{kind.value}: non-finite theta")
    return filter_unit_increment(kind, img, consts, image_mean, lum, theta >= 0.0)


def filter_vjp_image(
    kind: FilterKind,
    theta: float,
    img: np.ndarray,
    consts: FilterConstants,
    grad: np.ndarray,
    lum_grad: np.ndarray | None = None,
) -> np.ndarray:
    """Vector-Jacobian product of the increment w.r.t. the image.

    Returns d<grad, dF(theta, X)>/dX for an (H, W, 3) cotangent ``grad``.
    Needed only where increments are recomputed from a running image (the
    sequential compositor); in the parallel model increments read the
    fixed source image.  ``lum_grad`` is luminance_grad(img), computed on
    demand when omitted.
    """
    if theta == 0.0:
        return np.zeros_like(grad)
    if kind is FilterKind.CONTRAST:
        # mean couples all entries: d inc_i/dx_j = theta (delta_ij - 1/N)
        return theta * (grad - np.sum(grad) / grad.size)
    if kind is FilterKind.SATURATION:
        if lum_grad is None:
            lum_grad = luminance_grad(img)
        return theta * (grad - np.sum(grad, axis=-1, keepdims=True) * lum_grad)
    if kind is FilterKind.HUE:
        return consts.hue_gain * theta * grad * np.array([1.0, 1.0, -0.5])
    if kind is FilterKind.TEMPERATURE:
        return theta * grad * _temp_channel_gains(consts, theta >= 0.0)
    base = kind.value.split("_")[0]
    ch = kind.channel
    if base == "shift":
        return np.zeros_like(grad)
    if base == "shadows":
        deriv = np.full_like(img, -theta)
    elif base == "midtones":
        deriv = -2.0 * theta * (img - 0.5)
    elif base == "highlights":
        deriv = np.full_like(img, theta)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown filter kind {kind!r}")
    out = deriv * grad
    if ch is not None:
        keep = np.zeros(3)
        keep[ch] = 1.0
        out = out * keep
    return out


def image_mean(img: np.ndarray) -> float:
    """Scalar mean over all pixels and channels, the contrast pivot."""
    return float(np.mean(require_image(img)))


def image_stats(img: np.ndarray) -> tuple[float, np.ndarray]:
    """(mean, luminance map) pair every filter evaluation needs."""
    arr = require_image(img)
    return float(np.mean(arr)), luminance_map(arr)
