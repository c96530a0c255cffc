"""Line-oriented text formats for surfaces, potentials, targets, results and histories.

Floats are written with ``repr`` so every format round-trips exactly.
"""

from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np

from .currents import CurrentPotential, potential_modes
from .errors import FormatError
from .surfaces import FourierSurface

HISTORY_HEADER = "# cwsopt-history v1"
RESULT_HEADER = "# cwsopt-result v1"


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _num(tok: str, lineno: int, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise FormatError(f"line {lineno}: cannot parse {tok!r} as {kind.__name__}") from None


# ------------------------------------------------------------------ surfaces

def parse_surface(text: str) -> FourierSurface:
    """``nfp <int>``, optional ``truncation <m_max> <n_max>``, then ``m n R_mn Z_mn`` lines."""
    nfp = None
    trunc = (None, None)
    r, z = {}, {}
    for lineno, tok in _lines(text):
        key = tok[0].lower()
        if key == "nfp":
            if len(tok) != 2:
                raise FormatError(f"line {lineno}: expected 'nfp <int>'")
            nfp = _num(tok[1], lineno, int)
        elif key == "truncation":
            if len(tok) != 3:
                raise FormatError(f"line {lineno}: expected 'truncation <m_max> <n_max>'")
            trunc = (_num(tok[1], lineno, int), _num(tok[2], lineno, int))
        elif len(tok) == 4:
            m, n = _num(tok[0], lineno, int), _num(tok[1], lineno, int)
            rv, zv = _num(tok[2], lineno), _num(tok[3], lineno)
            if m < 0:
                raise FormatError(f"line {lineno}: poloidal index must be >= 0")
            if m == 0 and n == 0 and zv != 0.0:
                raise FormatError(f"line {lineno}: Z_0,0 must be zero")
            if (m, n) in r:
                raise FormatError(f"line {lineno}: duplicate mode ({m}, {n})")
            r[(m, n)] = rv
            if not (m == 0 and n == 0):
                z[(m, n)] = zv
        else:
            raise FormatError(f"line {lineno}: expected 'm n R_mn Z_mn', got {' '.join(tok)!r}")
    if nfp is None:
        raise FormatError("missing 'nfp <int>' header")
    try:
        return FourierSurface(nfp, r, z, *trunc)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def format_surface(surface: FourierSurface, comment: str = "") -> str:
    out = [f"# {comment}"] if comment else []
    out.append(f"nfp {surface.nfp}")
    out.append(f"truncation {surface.m_max} {surface.n_max}")
    out.append("# m n R_mn Z_mn")
    keys = sorted(set(surface.r_cos) | set(surface.z_sin))
    for m, n in keys:
        out.append(f"{m} {n} {float(surface.r_cos.get((m, n), 0.0))!r} "
                   f"{float(surface.z_sin.get((m, n), 0.0))!r}")
    return "\n".join(out) + "\n"


def load_surface(path) -> FourierSurface:
    return parse_surface(Path(path).read_text())


def save_surface(path, surface: FourierSurface, comment: str = ""):
    Path(path).write_text(format_surface(surface, comment))


# ----------------------------------------------------------------- potential

def parse_potential(text: str) -> CurrentPotential:
    """``ipol <float>``, ``itor <float>`` headers and ``m n Phi_mn`` lines."""
    head = {"ipol": None, "itor": 0.0}
    phi = {}
    for lineno, tok in _lines(text):
        key = tok[0].lower()
        if key in head:
            if len(tok) != 2:
                raise FormatError(f"line {lineno}: expected '{key} <float>'")
            head[key] = _num(tok[1], lineno)
        elif len(tok) == 3:
            m, n = _num(tok[0], lineno, int), _num(tok[1], lineno, int)
            if (m, n) in phi:
                raise FormatError(f"line {lineno}: duplicate mode ({m}, {n})")
            phi[(m, n)] = _num(tok[2], lineno)
        else:
            raise FormatError(f"line {lineno}: expected 'm n Phi_mn', got {' '.join(tok)!r}")
    if head["ipol"] is None:
        raise FormatError("missing 'ipol <float>' header")
    try:
        return CurrentPotential(phi, head["ipol"], head["itor"])
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def format_potential(pot: CurrentPotential) -> str:
    out = [f"ipol {float(pot.i_pol)!r}", f"itor {float(pot.i_tor)!r}", "# m n Phi_mn"]
    out += [f"{m} {n} {float(v)!r}" for (m, n), v in sorted(pot.phi_sin.items())]
    return "\n".join(out) + "\n"


def load_potential(path) -> CurrentPotential:
    return parse_potential(Path(path).read_text())


def save_potential(path, pot: CurrentPotential):
    Path(path).write_text(format_potential(pot))


# -------------------------------------------------------------------- target

def parse_target(text: str) -> dict:
    """Target normal field: ``format bmn`` + ``m n B_mn``, or ``format grid``,
    ``grid <n_u> <n_v>`` + ``i j value``.

    Returns ``{"format": "bmn", "bmn": {...}}`` or ``{"format": "grid", "values": array}``.
    """
    fmt = None
    shape = None
    bmn = {}
    cells = {}
    for lineno, tok in _lines(text):
        key = tok[0].lower()
        if key == "format":
            if len(tok) != 2 or tok[1].lower() not in ("bmn", "grid"):
                raise FormatError(f"line {lineno}: expected 'format bmn' or 'format grid'")
            fmt = tok[1].lower()
        elif key == "grid":
            if len(tok) != 3:
                raise FormatError(f"line {lineno}: expected 'grid <n_u> <n_v>'")
            shape = (_num(tok[1], lineno, int), _num(tok[2], lineno, int))
        elif len(tok) == 3 and fmt is None:
            raise FormatError(f"line {lineno}: data before the 'format bmn|grid' header")
        elif len(tok) == 3:
            a, b = _num(tok[0], lineno, int), _num(tok[1], lineno, int)
            table = bmn if fmt == "bmn" else cells
            if (a, b) in table:
                raise FormatError(f"line {lineno}: duplicate entry ({a}, {b})")
            table[(a, b)] = _num(tok[2], lineno)
        else:
            raise FormatError(f"line {lineno}: unexpected {' '.join(tok)!r}")
    if fmt is None:
        raise FormatError("missing 'format bmn|grid' header")
    if fmt == "bmn":
        for m, n in bmn:
            if m < 0 or (m == 0 and n <= 0 and bmn[(m, n)] != 0.0):
                raise FormatError(f"B_{m},{n}: use m > 0, or m = 0 with n > 0")
        return {"format": "bmn", "bmn": bmn}
    if shape is None:
        raise FormatError("grid target needs a 'grid <n_u> <n_v>' header")
    values = np.full(shape, np.nan)
    for (i, j), val in cells.items():
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise FormatError(f"grid index ({i}, {j}) outside {shape}")
        values[i, j] = val
    if np.isnan(values).any():
        raise FormatError("grid target does not cover every grid point")
    return {"format": "grid", "values": values}


def format_target_bmn(bmn: dict) -> str:
    out = ["format bmn", "# m n B_mn"] + [f"{m} {n} {float(v)!r}"
                                          for (m, n), v in sorted(bmn.items())]
    return "\n".join(out) + "\n"


def format_target_grid(values: np.ndarray) -> str:
    values = np.asarray(values, dtype=float)
    out = ["format grid", f"grid {values.shape[0]} {values.shape[1]}", "# i j value"]
    out += [f"{i} {j} {float(values[i, j])!r}" for i in range(values.shape[0])
            for j in range(values.shape[1])]
    return "\n".join(out) + "\n"


def load_target(path) -> dict:
    return parse_target(Path(path).read_text())


# -------------------------------------------------------------------- results

def _scalar(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def format_result(result, settings, extra: dict | None = None) -> str:
    """Key-value record followed by a CSV block of potential coefficients."""
    fields = {
        "chi2_b": result.chi2_b, "chi2_j": result.chi2_j, "cost": result.cost,
        "lambda": result.lam, "stationarity": result.stationarity,
        "n_u": settings.n_u, "n_v": settings.n_v,
        "pot_m_max": settings.pot_m_max, "pot_n_max": settings.pot_n_max,
        "i_pol": settings.i_pol, "i_tor": settings.i_tor,
    }
    fields.update(extra or {})
    out = [RESULT_HEADER] + [f"{k} = {_scalar(v)!r}" for k, v in fields.items()]
    out.append("[coefficients]")
    out.append("m,n,phi_mn")
    modes = potential_modes(settings.pot_m_max, settings.pot_n_max)
    out += [f"{m},{n},{float(x)!r}" for (m, n), x in zip(modes, result.phi_opt)]
    return "\n".join(out) + "\n"


def parse_result(text: str) -> dict:
    lines = text.splitlines()
    if not lines or lines[0].strip() != RESULT_HEADER:
        raise FormatError("not a result record")
    record = {}
    i = 1
    while i < len(lines) and lines[i].strip() != "[coefficients]":
        if lines[i].strip():
            key, _, val = lines[i].partition("=")
            val = val.strip()
            try:
                record[key.strip()] = int(val)
            except ValueError:
                try:
                    record[key.strip()] = float(val)
                except ValueError:
                    record[key.strip()] = val.strip("'\"")
        i += 1
    coeffs = {}
    rows = list(csv.reader(lines[i + 2:])) if i < len(lines) else []
    for row in rows:
        if row:
            coeffs[(int(row[0]), int(row[1]))] = float(row[2])
    record["coefficients"] = coeffs
    return record


def format_gradient(grad) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(grad.dPenalties)
    w.writerow(["coeff_type", "m", "n", "dC"] + names + ["total"])
    for k, (kind, m, n) in enumerate(grad.ids):
        w.writerow([kind, m, n, repr(float(grad.dC[k]))]
                   + [repr(float(grad.dPenalties[p][k])) for p in names]
                   + [repr(float(grad.dTotal[k]))])
    return buf.getvalue()


def parse_gradient(text: str) -> dict:
    rows = list(csv.DictReader(_io.StringIO(text)))
    out = {}
    for row in rows:
        cid = (row.pop("coeff_type"), int(row.pop("m")), int(row.pop("n")))
        out[cid] = {k: float(v) for k, v in row.items()}
    return out


# -------------------------------------------------------------------- history

class HistoryWriter:
    """Appends one CSV row per iteration, flushing after every row."""

    def __init__(self, path, columns):
        self.columns = list(columns)
        self.fh = open(path, "w", newline="")
        self.fh.write(HISTORY_HEADER + "\n")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(self.columns)
        self.fh.flush()

    def write(self, row: dict):
        self.writer.writerow([repr(float(row[c])) if not isinstance(row[c], (int, np.integer))
                              else str(row[c]) for c in self.columns])
        self.fh.flush()

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def format_history(rows, columns) -> str:
    buf = _io.StringIO()
    buf.write(HISTORY_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(row[c])) if not isinstance(row[c], (int, np.integer))
                    else str(row[c]) for c in columns])
    return buf.getvalue()


def parse_history(text: str) -> list:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HISTORY_HEADER:
        raise FormatError(f"history file must start with {HISTORY_HEADER!r}")
    rows = []
    for row in csv.DictReader(lines[1:]):
        parsed = {}
        for k, v in row.items():
            parsed[k] = int(v) if k in ("iteration", "n_eval") else float(v)
        rows.append(parsed)
    return rows


def load_history(path) -> list:
    return parse_history(Path(path).read_text())


def save_checkpoint(directory, iteration: int, surface: FourierSurface,
                    potential: CurrentPotential | None = None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_surface(d / f"ckpt_{iteration:05d}_cws.txt", surface, f"iteration {iteration}")
    if potential is not None:
        save_potential(d / f"ckpt_{iteration:05d}_phi.txt", potential)


# ------------------------------------------------------------ converter stub

def surface_from_vmec_modes(xm, xn, rmnc, zmns, nfp: int) -> FourierSurface:
    """Convert VMEC-style boundary modes into a FourierSurface.

    VMEC writes R = sum rmnc cos(m theta - xn zeta) with xn a multiple of nfp.
    With theta = 2 pi u and zeta = 2 pi v / nfp this is cos(2 pi (m u + n v))
    for n = -xn / nfp. Reading the equilibrium file itself (netCDF or text) is
    left to the caller; pass the boundary rows of rmnc/zmns. If the poloidal
    angle runs the other way, ``eval_mesh`` reports the inverted orientation
    and the Z coefficients should be negated.
    """
    r, z = {}, {}
    for m, xnn, rc, zs in zip(xm, xn, rmnc, zmns):
        m, xnn = int(round(m)), int(round(xnn))
        if xnn % nfp:
            raise FormatError(f"toroidal mode {xnn} is not a multiple of nfp={nfp}")
        n = -xnn // nfp
        r[(m, n)] = r.get((m, n), 0.0) + float(rc)
        if not (m == 0 and n == 0):
            z[(m, n)] = z.get((m, n), 0.0) + float(zs)
    return FourierSurface(nfp, r, z)
