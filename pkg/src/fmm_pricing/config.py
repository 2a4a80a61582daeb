"""Run configuration: an INI file with market, product and method sections.

Schema (``#`` starts a comment line)::

    [market]
    # one row per rate: T_k  R_k(0)  sigma_k
    tenor =
        0.25  0.010  0.20
        0.50  0.013  0.15
    # a constant coefficient or N whitespace-separated rows
    correlation = 0.5

    [product]
    a = 1
    b = 2
    # absolute strike, "atm", or a multiple of ATM such as x1.1
    strike = atm
    # optional ladder, overrides strike
    strikes = x1.2 x1.1 x1.0 x0.9 x0.8
    # optional early exercise indices; the last must equal a
    exercise = 1 2 3

    [mc]
    paths = 1000000
    steps = 100
    seed = 12345
    antithetic = false
    workers = 1

    [pde]
    # one M for every axis, or one per axis
    resolution = 64
    # "auto" for max(0.5, 30 K_ATM), one value, or one per axis
    r_max = auto
    mesh = sinh
    stretch = 0.1
    # "2L" for tau_1/(2L), or an integer r for tau_1/2^r
    dt = 2L
    theta = 0.5
    nu = auto
    kappa = 0.5

    [converge]
    resolutions = 32 64 128 256 512
    reference = 1024

Only ``[market]`` and ``[product]`` are required; the method sections fall
back to their defaults.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .amfr_w1 import DEFAULT_KAPPA
from .market_model import DomainError, MarketData, TenorStructure, atm_strike
from .monte_carlo import MCConfig
from .payoffs import SwaptionSpec
from .pde_grid import GridConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and its line."""


@dataclass(frozen=True)
class StrikeSpec:
    """Absolute strike, or a multiple of the ATM rate when ``multiple`` is set."""

    value: float
    multiple: bool = False

    @classmethod
    def parse(cls, text: str) -> "StrikeSpec":
        t = text.strip().lower()
        if t == "atm":
            return cls(1.0, True)
        if t.startswith("x"):
            m = float(t[1:])
            if not m > 0.0:
                raise ValueError("strike multiple must be positive")
            return cls(m, True)
        return cls(float(t), False)

    def resolve(self, atm: float) -> float:
        return self.value * atm if self.multiple else self.value

    def __str__(self) -> str:
        return f"x{self.value!r}" if self.multiple else repr(self.value)


@dataclass(frozen=True)
class ProductConfig:
    a: int
    b: int
    strikes: tuple[StrikeSpec, ...]
    exercise: tuple[int, ...] = ()

    def specs(self, md: MarketData) -> list[SwaptionSpec]:
        atm = atm_strike(md, self.a, self.b)
        return [SwaptionSpec(self.a, self.b, s.resolve(atm), self.exercise) for s in self.strikes]


@dataclass(frozen=True)
class PDESettings:
    resolution: tuple[int, ...] = (64,)
    r_max: tuple[float, ...] | None = None
    mesh: str = "sinh"
    stretch: float = 0.1
    dt_exponent: int | None = None
    theta: float = 0.5
    nu: float | None = None
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if any(m < 2 for m in self.resolution):
            raise DomainError("resolution must be at least 2")
        if self.r_max is not None and any(r <= 0.0 for r in self.r_max):
            raise DomainError("r_max must be positive")
        if self.mesh not in ("sinh", "uniform"):
            raise DomainError("mesh must be 'sinh' or 'uniform'")
        if self.stretch <= 0.0 or self.theta <= 0.0 or self.kappa <= 0.0:
            raise DomainError("stretch, theta and kappa must be positive")
        if self.nu is not None and self.nu <= 0.0:
            raise DomainError("nu must be positive")

    def grid_config(self) -> GridConfig:
        res = self.resolution[0] if len(self.resolution) == 1 else self.resolution
        rm = self.r_max if self.r_max is None or len(self.r_max) > 1 else self.r_max[0]
        return GridConfig(res, rm, self.mesh, self.stretch)


@dataclass(frozen=True)
class ConvergeSettings:
    resolutions: tuple[int, ...] = (32, 64, 128, 256, 512)
    reference: int = 1024


@dataclass(frozen=True)
class RunConfig:
    """Normalised configuration; compare with ``==`` for round trips."""

    tenor_rows: tuple[tuple[float, float, float], ...]
    correlation: float | tuple[tuple[float, ...], ...]
    product: ProductConfig
    mc: MCConfig = field(default_factory=MCConfig)
    pde: PDESettings = field(default_factory=PDESettings)
    converge: ConvergeSettings = field(default_factory=ConvergeSettings)

    def market_data(self) -> MarketData:
        rows = self.tenor_rows
        return MarketData(
            TenorStructure.from_end_dates([r[0] for r in rows]),
            [r[1] for r in rows],
            [r[2] for r in rows],
            self.correlation,
        )

    def specs(self) -> list[SwaptionSpec]:
        return self.product.specs(self.market_data())


# --- parsing --------------------------------------------------------------


class _Source:
    """Raw lines of the file, used to report line numbers."""

    def __init__(self, text: str, name: str):
        self.lines = text.splitlines()
        self.name = name

    def key_line(self, section: str, key: str) -> int | None:
        current = None
        for i, raw in enumerate(self.lines, 1):
            m = re.match(r"\s*\[([^\]]+)\]", raw)
            if m:
                current = m.group(1).strip().lower()
                continue
            if current == section and re.match(rf"{re.escape(key)}\s*[=:]", raw.strip(), re.I):
                return i
        return None

    def value_lines(self, section: str, key: str) -> list[int]:
        """Line numbers of the non-empty, non-comment rows of a value."""
        start = self.key_line(section, key)
        if start is None:
            return []
        out = []
        first = re.split(r"[=:]", self.lines[start - 1], maxsplit=1)[-1]
        if first.strip():
            out.append(start)
        for i in range(start, len(self.lines)):
            raw = self.lines[i]
            if raw.strip() and not raw[0].isspace():
                break
            if raw.strip() and not raw.strip().startswith(("#", ";")):
                out.append(i + 1)
        return out

    def error(self, section: str, key: str, msg: str, line: int | None = None) -> ConfigError:
        line = line or self.key_line(section, key)
        where = f"{self.name}:{line}" if line else self.name
        return ConfigError(f"{where}: [{section}] {key}: {msg}")


def _rows(value: str) -> list[str]:
    return [r.strip() for r in value.strip().splitlines() if r.strip() and not r.strip().startswith(("#", ";"))]


def parse_config_text(text: str, name: str = "<config>") -> RunConfig:
    src = _Source(text, name)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: {exc}") from exc

    def need(section, key):
        if not cp.has_section(section):
            raise ConfigError(f"{name}: missing section [{section}]")
        if not cp.has_option(section, key):
            raise ConfigError(f"{name}: [{section}] missing field {key!r}")
        return cp.get(section, key)

    def conv(section, key, fn, default=None):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return fn(raw.strip())
        except (ValueError, TypeError, DomainError) as exc:
            raise src.error(section, key, f"invalid value {raw.strip()!r} ({exc})") from exc

    # market
    rows_txt = _rows(need("market", "tenor"))
    row_lines = src.value_lines("market", "tenor")
    rows = []
    for i, row in enumerate(rows_txt):
        line = row_lines[i] if i < len(row_lines) else None
        parts = row.split()
        if len(parts) != 3:
            raise src.error("market", "tenor", f"row {i + 1} needs 'T R0 sigma', got {row!r}", line)
        try:
            t, r0, sig = (float(p) for p in parts)
        except ValueError as exc:
            raise src.error("market", "tenor", f"row {i + 1}: {exc}", line) from exc
        if rows and t <= rows[-1][0]:
            raise src.error("market", "tenor", f"row {i + 1}: dates must be strictly increasing", line)
        if t <= 0.0:
            raise src.error("market", "tenor", f"row {i + 1}: dates must be positive", line)
        if sig < 0.0:
            raise src.error("market", "tenor", f"row {i + 1}: volatility must be nonnegative", line)
        rows.append((t, r0, sig))
    if not rows:
        raise src.error("market", "tenor", "no rows")
    n = len(rows)

    corr_txt = _rows(cp.get("market", "correlation", fallback="0.0"))
    try:
        if len(corr_txt) == 1 and len(corr_txt[0].split()) == 1:
            correlation: float | tuple = float(corr_txt[0])
            if not -1.0 <= correlation <= 1.0:
                raise ValueError("correlation must lie in [-1, 1]")
        else:
            correlation = tuple(tuple(float(v) for v in r.split()) for r in corr_txt)
            if len(correlation) != n or any(len(r) != n for r in correlation):
                raise ValueError(f"matrix must be {n}x{n}")
    except ValueError as exc:
        raise src.error("market", "correlation", str(exc)) from exc

    # product
    a = conv("product", "a", int)
    b = conv("product", "b", int)
    if a is None or b is None:
        raise ConfigError(f"{name}: [product] needs fields 'a' and 'b'")
    if not 0 < a < b <= n:
        raise src.error("product", "b", f"need 0 < a < b <= {n}, got a={a}, b={b}")
    if cp.has_option("product", "strikes"):
        strikes = conv("product", "strikes", lambda v: tuple(StrikeSpec.parse(x) for x in v.replace(",", " ").split()))
        if not strikes:
            raise src.error("product", "strikes", "empty ladder")
    else:
        strikes = (conv("product", "strike", StrikeSpec.parse, StrikeSpec(1.0, True)),)
    exercise = conv("product", "exercise", lambda v: tuple(int(x) for x in v.replace(",", " ").split()), ())
    product = ProductConfig(a, b, strikes, exercise)

    methods = []
    for section, fn in (("mc", _parse_mc), ("pde", _parse_pde), ("converge", _parse_converge)):
        try:
            methods.append(fn(cp, conv))
        except DomainError as exc:
            raise ConfigError(f"{name}: [{section}] {exc}") from exc
    cfg = RunConfig(tuple(rows), correlation, product, *methods)
    try:
        md = cfg.market_data()
    except DomainError as exc:
        raise src.error("market", "correlation" if "correlation" in str(exc) else "tenor", str(exc)) from exc
    try:
        product.specs(md)
    except DomainError as exc:
        raise src.error("product", "exercise" if exercise else "strike", str(exc)) from exc
    return cfg


def _bool(v: str) -> bool:
    t = v.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _auto(fn):
    return lambda v: None if v.lower() == "auto" else fn(v)


def _ints(v: str) -> tuple[int, ...]:
    out = tuple(int(x) for x in v.replace(",", " ").split())
    if not out:
        raise ValueError("empty list")
    return out


def _floats(v: str) -> tuple[float, ...]:
    out = tuple(float(x) for x in v.replace(",", " ").split())
    if not out:
        raise ValueError("empty list")
    return out


def _dt_rule(v: str) -> int | None:
    return None if v.upper() == "2L" else int(v)


def _parse_mc(cp, conv) -> MCConfig:
    d = MCConfig()
    return MCConfig(
        num_paths=conv("mc", "paths", int, d.num_paths),
        num_steps=conv("mc", "steps", int, d.num_steps),
        seed=conv("mc", "seed", int, d.seed),
        antithetic=conv("mc", "antithetic", _bool, d.antithetic),
        workers=conv("mc", "workers", int, d.workers),
    )


def _parse_pde(cp, conv) -> PDESettings:
    d = PDESettings()
    return PDESettings(
        resolution=conv("pde", "resolution", _ints, d.resolution),
        r_max=conv("pde", "r_max", _auto(_floats), d.r_max),
        mesh=conv("pde", "mesh", _mesh, d.mesh),
        stretch=conv("pde", "stretch", float, d.stretch),
        dt_exponent=conv("pde", "dt", _dt_rule, d.dt_exponent),
        theta=conv("pde", "theta", float, d.theta),
        nu=conv("pde", "nu", _auto(float), d.nu),
        kappa=conv("pde", "kappa", float, d.kappa),
    )


def _mesh(v: str) -> str:
    if v not in ("sinh", "uniform"):
        raise ValueError("mesh must be 'sinh' or 'uniform'")
    return v


def _parse_converge(cp, conv) -> ConvergeSettings:
    d = ConvergeSettings()
    out = ConvergeSettings(
        resolutions=conv("converge", "resolutions", _ints, d.resolutions),
        reference=conv("converge", "reference", int, d.reference),
    )
    if len(out.resolutions) < 2 or any(b != 2 * a for a, b in zip(out.resolutions, out.resolutions[1:])):
        raise DomainError("resolutions must be at least two doubling values")
    if out.reference <= max(out.resolutions):
        raise DomainError("reference must exceed every resolution")
    return out


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config_text(text, str(path))


# --- serialisation --------------------------------------------------------


def serialize_config(cfg: RunConfig) -> str:
    """INI text that parses back to an equal :class:`RunConfig`."""

    def join(vals):
        return " ".join(repr(v) for v in vals)

    out = ["[market]", "tenor ="]
    out += [f"    {t!r} {r!r} {s!r}" for t, r, s in cfg.tenor_rows]
    if isinstance(cfg.correlation, tuple):
        out.append("correlation =")
        out += [f"    {join(r)}" for r in cfg.correlation]
    else:
        out.append(f"correlation = {cfg.correlation!r}")
    p = cfg.product
    out += ["", "[product]", f"a = {p.a}", f"b = {p.b}", "strikes = " + " ".join(str(s) for s in p.strikes)]
    if p.exercise:
        out.append("exercise = " + " ".join(str(e) for e in p.exercise))
    m = cfg.mc
    out += [
        "",
        "[mc]",
        f"paths = {m.num_paths}",
        f"steps = {m.num_steps}",
        f"seed = {m.seed}",
        f"antithetic = {str(m.antithetic).lower()}",
        f"workers = {m.workers}",
    ]
    d = cfg.pde
    out += [
        "",
        "[pde]",
        f"resolution = {join(d.resolution)}",
        f"r_max = {'auto' if d.r_max is None else join(d.r_max)}",
        f"mesh = {d.mesh}",
        f"stretch = {d.stretch!r}",
        f"dt = {'2L' if d.dt_exponent is None else d.dt_exponent}",
        f"theta = {d.theta!r}",
        f"nu = {'auto' if d.nu is None else repr(d.nu)}",
        f"kappa = {d.kappa!r}",
    ]
    c = cfg.converge
    out += ["", "[converge]", f"resolutions = {join(c.resolutions)}", f"reference = {c.reference}", ""]
    return "\n".join(out)

