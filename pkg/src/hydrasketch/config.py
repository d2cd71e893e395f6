"""Sketch configuration and the sizing planner.

The planner balances the two error terms of the hydra bound,
``eps_us + eps * G_S / G_min``, under a counter budget ``M = w * w_cs``:

    M    = 2 / (eps_us^3 * gmin_ratio)
    w_cs = (M * gmin_ratio) ** (2/3)
    w    = M / w_cs

Row counts follow ``ceil(ln(1/delta))``, layers ``ceil(log2(n_us))`` and
heap capacity ``ceil(1/eps_us^2)``. Constants hidden by the asymptotics
are 1 and widths are rounded up to powers of two.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

# bytes per serialized heap slot beyond the key: u16 length + i64 estimate
HEAP_SLOT_OVERHEAD = 2 + 8
HEAP_HEADER_BYTES = 4
DEFAULT_KEY_BYTES = 64
DEFAULT_N_US = 16


def pow2ceil(x: float) -> int:
    if x <= 1:
        return 1
    return 1 << math.ceil(math.log2(x) - 1e-12)


def _ceil(x: float) -> int:
    # guards against 1/0.1**2 == 99.99999999999998
    return math.ceil(round(x, 9))


@dataclass(frozen=True)
class HydraConfig:
    """Shape of a hydra sketch plus the error targets it was sized for.

    ``eps``/``eps_us``/``delta``/``delta_us`` default to the shape-implied
    values ``1/w``, ``1/sqrt(w_cs)``, ``exp(-r)`` and ``exp(-r_cs)``.
    """

    r: int
    w: int
    r_cs: int
    w_cs: int
    L: int
    k: int
    stream_seed: int = 0
    key_bytes: int = DEFAULT_KEY_BYTES
    one_hash: bool = True
    one_layer: bool = True
    eps: float | None = None
    delta: float | None = None
    eps_us: float | None = None
    delta_us: float | None = None
    gmin_ratio: float | None = None
    m_target: float | None = None

    def __post_init__(self):
        for name in ("r", "w", "r_cs", "w_cs", "L", "k", "key_bytes"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.key_bytes > 0xFFFF:
            raise ConfigError("key_bytes must fit in 16 bits")
        if not 0 <= self.stream_seed < 1 << 64:
            raise ConfigError("stream_seed must be a 64-bit unsigned integer")
        defaults = {
            "eps": 1.0 / self.w,
            "eps_us": 1.0 / math.sqrt(self.w_cs),
            "delta": math.exp(-self.r),
            "delta_us": math.exp(-self.r_cs),
        }
        for name, v in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, v)

    @property
    def M(self) -> int:
        """Counter budget in units of count-sketch columns."""
        return self.w * self.w_cs

    @property
    def confidence(self) -> float:
        return 1.0 - self.delta

    def error_bound(self, g_ratio: float) -> tuple[float, float, float]:
        return error_bound(self, g_ratio)

    def memory_bytes(self) -> int:
        return memory_bytes(self)

    def replace(self, **changes) -> "HydraConfig":
        d = asdict(self)
        d.update(changes)
        return HydraConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HydraConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HydraConfig":
        return cls.from_dict(json.loads(text))


def error_bound(cfg: HydraConfig, g_ratio: float) -> tuple[float, float, float]:
    """Relative-error band ``(lower, upper, confidence)`` for ``G_S / G_i = g_ratio``."""
    if g_ratio < 1:
        raise ValueError(f"G_S/G_i must be >= 1, got {g_ratio}")
    return -cfg.eps_us, cfg.eps_us + cfg.eps * g_ratio, 1.0 - cfg.delta


def memory_bytes(cfg: HydraConfig) -> int:
    """Counter and heap bytes of the grid (excludes the small file header)."""
    heap = HEAP_HEADER_BYTES + cfg.k * (HEAP_SLOT_OVERHEAD + cfg.key_bytes)
    return cfg.r * cfg.w * cfg.L * (cfg.r_cs * cfg.w_cs * 8 + heap)


def plan(
    delta: float,
    eps_us: float,
    gmin_ratio: float,
    n_us: float | None = None,
    n_keys: float | None = None,
    stream_seed: int = 0,
    key_bytes: int = DEFAULT_KEY_BYTES,
) -> HydraConfig:
    """Size a sketch for relative error in ``[-eps_us, 2*eps_us]`` w.p. ``1-delta``
    on every subpopulation with ``G_i >= gmin_ratio * G_S``.

    ``n_us`` is the expected number of distinct keys per universal sketch;
    if omitted it is derived from ``n_keys`` (distinct subpopulation/metric
    pairs in the stream) divided by ``w``, else DEFAULT_N_US.
    """
    if not 0 < delta < 1:
        raise ConfigError(f"delta must be in (0, 1), got {delta}")
    if not 0 < eps_us < 1:
        raise ConfigError(f"eps_us must be in (0, 1), got {eps_us}")
    if not 0 < gmin_ratio < 1:
        raise ConfigError(f"gmin_ratio must be in (0, 1), got {gmin_ratio}")
    if n_us is not None and n_us < 1:
        raise ConfigError(f"n_us must be >= 1, got {n_us}")

    m_target = 2.0 / (eps_us ** 3 * gmin_ratio)
    w_cs_raw = (m_target * gmin_ratio) ** (2.0 / 3.0)
    if w_cs_raw < 1:
        raise ConfigError(f"targets imply w_cs = {w_cs_raw:.3g} < 1")
    w_cs = pow2ceil(w_cs_raw)
    w_raw = m_target / w_cs
    if w_raw < 1:
        raise ConfigError(f"targets imply w = {w_raw:.3g} < 1")
    w = pow2ceil(w_raw)

    if n_us is None:
        n_us = max(1.0, n_keys / w) if n_keys is not None else DEFAULT_N_US
    L = max(1, math.ceil(math.log2(n_us)))

    return HydraConfig(
        r=max(1, _ceil(math.log(1 / delta))),
        w=w,
        r_cs=max(1, _ceil(math.log(1 / delta))),
        w_cs=w_cs,
        L=L,
        k=_ceil(1 / eps_us ** 2),
        stream_seed=stream_seed,
        key_bytes=key_bytes,
        eps=eps_us * gmin_ratio,
        delta=delta,
        eps_us=eps_us,
        delta_us=delta,
        gmin_ratio=gmin_ratio,
        m_target=m_target,
    )


def describe(cfg: HydraConfig) -> str:
    lines = [
        f"grid            r={cfg.r} rows x w={cfg.w} universal sketches",
        f"universal       L={cfg.L} layers, k={cfg.k} heavy keys per layer",
        f"count sketch    r_cs={cfg.r_cs} x w_cs={cfg.w_cs}",
        f"counter budget  M = w * w_cs = {cfg.M:,}"
        + (f" (closed form {cfg.m_target:,.0f})" if cfg.m_target else ""),
        f"memory          ~{memory_bytes(cfg):,} bytes",
        f"error targets   eps={cfg.eps:.3g} delta={cfg.delta:.3g} eps_us={cfg.eps_us:.3g} "
        f"delta_us={cfg.delta_us:.3g}",
    ]
    if cfg.gmin_ratio:
        lo, hi, conf = error_bound(cfg, 1.0 / cfg.gmin_ratio)
        lines.append(
            f"bound at G_min  relative error in [{lo:+.3g}, {hi:+.3g}] with probability {conf:.3g}"
            f" (G_min/G_S = {cfg.gmin_ratio:g})"
        )
    return "\n".join(lines)
