"""Flat ``key = value`` run configuration with typed validation."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import FormatError, MissingRequired, TypeMismatch, UnknownKey
from .inverse import SolverSettings
from .optimizer import BFGSSettings
from .shape_gradient import PenaltyConfig

REQUIRED = ("cws_file", "plasma_file", "i_pol")


@dataclass(frozen=True)
class RunConfig:
    # files
    cws_file: str = ""
    plasma_file: str = ""
    target_file: str = ""  # empty: zero normal-field target
    output_dir: str = "."
    # discretization
    n_u: int = 64
    n_v: int = 64
    plasma_n_u: int = 0  # 0: same as n_u
    plasma_n_v: int = 0
    surface_m_max: int = -1  # -1: truncation of the surface file
    surface_n_max: int = -1
    potential_order: int = 12
    free_coefficients: str = "all"
    # inner problem
    i_pol: float = 0.0
    i_tor: float = 0.0
    lam: float = 2.5e-16
    guard: float = 0.05
    # penalties
    perimeter_max: float = 56.0
    distance_min: float = 0.20
    reach_min: float = 0.0769
    w_perimeter: float = 1.0
    w_distance: float = 1.0
    w_reach: float = 1.0
    p_perimeter: float = 3.0
    p_distance: float = 3.0
    p_reach: float = 3.0
    lse_temperature: float = 1e-3
    reach_cutoff: float = 0.25
    # optimizer
    max_iter: int = 2000
    gtol: float = 1e-10
    ftol: float = 0.0
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    max_step: float = 0.05
    f_noise: float = 1e-10
    checkpoint_every: int = 0
    # runtime
    threads: int = 1
    seed: int = 0

    # ---------------------------------------------------------------- views
    def solver_settings(self) -> SolverSettings:
        return SolverSettings(self.n_u, self.n_v, self.potential_order, self.potential_order,
                              self.i_pol, self.i_tor, self.lam, self.guard)

    def penalty_config(self) -> PenaltyConfig:
        return PenaltyConfig(self.perimeter_max, self.distance_min, self.reach_min,
                             self.w_perimeter, self.w_distance, self.w_reach,
                             self.p_perimeter, self.p_distance, self.p_reach,
                             self.lse_temperature, self.reach_cutoff)

    def bfgs_settings(self) -> BFGSSettings:
        return BFGSSettings(max_iter=self.max_iter, gtol=self.gtol, ftol=self.ftol,
                            c1=self.c1, c2=self.c2, max_ls=self.max_ls,
                            max_step=self.max_step, f_noise=self.f_noise)

    def plasma_grid(self):
        return (self.plasma_n_u or self.n_u, self.plasma_n_v or self.n_v)

    def free_ids(self, surface):
        """Parse ``free_coefficients``: ``all`` or tokens like ``R_0_0 Z_1_-1``."""
        if self.free_coefficients.strip().lower() == "all":
            return surface.coefficient_ids()
        known = set(surface.coefficient_ids())
        ids = []
        for tok in self.free_coefficients.replace(",", " ").split():
            parts = tok.split("_")
            try:
                cid = (parts[0].upper(), int(parts[1]), int(parts[2]))
                if len(parts) != 3:
                    raise ValueError
            except (ValueError, IndexError):
                raise TypeMismatch("free_coefficients", f"bad token {tok!r}") from None
            if cid not in known:
                raise TypeMismatch("free_coefficients", f"{tok} outside the surface truncation")
            ids.append(cid)
        return ids

    def resolve(self, path: str, base: Path | None) -> Path:
        p = Path(path)
        return p if p.is_absolute() or base is None else base / p


# keys are accepted in either spelling; "lambda" is the documented one
_ALIASES = {"lambda": "lam"}
_FIELDS = {f.name: f for f in fields(RunConfig)}
_POSITIVE = {"n_u", "n_v", "potential_order", "lam", "guard", "perimeter_max", "distance_min",
             "reach_min", "lse_temperature", "reach_cutoff", "max_iter", "max_ls", "max_step",
             "threads", "c1", "c2"}
_NONNEG = {"plasma_n_u", "plasma_n_v", "w_perimeter", "w_distance", "w_reach", "gtol", "ftol",
           "f_noise", "checkpoint_every", "seed"}


def _coerce(key: str, raw: str, kind):
    raw = raw.strip()
    if kind == "int" or kind is int:
        try:
            return int(raw)
        except ValueError:
            raise TypeMismatch(_public(key), f"expected an integer, got {raw!r}") from None
    if kind == "float" or kind is float:
        try:
            return float(raw)
        except ValueError:
            raise TypeMismatch(_public(key), f"expected a number, got {raw!r}") from None
    return raw.strip("'\"")


def _public(name: str) -> str:
    return "lambda" if name == "lam" else name


def _validate(cfg: RunConfig):
    for name in _POSITIVE:
        if not getattr(cfg, name) > 0:
            raise TypeMismatch(_public(name), f"must be positive, got {getattr(cfg, name)!r}")
    for name in _NONNEG:
        if not getattr(cfg, name) >= 0:
            raise TypeMismatch(_public(name), f"must be nonnegative, got {getattr(cfg, name)!r}")
    if cfg.n_u < 4 or cfg.n_v < 4:
        raise TypeMismatch("n_u" if cfg.n_u < 4 else "n_v", "grid sizes must be at least 4")
    if not cfg.f_noise < 1.0:
        raise TypeMismatch("f_noise", "must be below 1")
    if not cfg.c1 < cfg.c2 < 1.0:
        raise TypeMismatch("c2", "line-search constants need 0 < c1 < c2 < 1")
    for name in ("p_perimeter", "p_distance", "p_reach"):
        if not getattr(cfg, name) > 1:
            raise TypeMismatch(name, "barrier exponent must exceed 1")
    for name in ("surface_m_max", "surface_n_max"):
        if getattr(cfg, name) < -1:
            raise TypeMismatch(name, "use -1 for the file truncation or a value >= 0")


def parse_config(text: str) -> RunConfig:
    """Parse a flat ``key = value`` document (``#``/``;`` comments)."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise FormatError(f"malformed configuration: {exc}") from exc
    values = {}
    for key, raw in parser["run"].items():
        name = _ALIASES.get(key, key)
        if name not in _FIELDS or name == "lam" and key != "lambda":
            raise UnknownKey(key)
        values[name] = _coerce(name, raw, _FIELDS[name].type)
    for key in REQUIRED:
        if key not in values:
            raise MissingRequired(key)
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: RunConfig) -> str:
    out = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        out.append(f"{_public(f.name)} = {val!r}" if not isinstance(val, str)
                   else f"{_public(f.name)} = {val}")
    return "\n".join(out) + "\n"
