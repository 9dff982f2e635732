"""Reference 4D formats.

PM formats are Cartesian products of a Gray-labeled 2D format with itself.
SP-QAM keeps the half of a PM-QAM parent whose integer-grid coordinate sum
is even; the surviving points keep their parent labels' order (index
compaction). 4D-2A8PSK uses two 8PSK rings per polarization.
"""

import re
from functools import lru_cache

import numpy as np

from .constellation import LabeledConstellation, cartesian_product, normalize_power
from .errors import BadParam, UnknownFormat

DEFAULT_RING_RATIO = 0.65


def gray(n):
    return n ^ (n >> 1)


def pam_levels(n_levels):
    """Odd-integer PAM levels indexed by Gray label; label 0 is the most positive level.

    The MSB is then the sign bit (0 <-> positive), matching the orthant
    convention.
    """
    levels = np.empty(n_levels)
    for a in range(n_levels):
        levels[gray(n_levels - 1 - a)] = 2 * a - (n_levels - 1)
    return levels


def rect_qam(n_i, n_q):
    """Rectangular QAM on the odd-integer grid; label = label_I || label_Q."""
    li, lq = pam_levels(n_i), pam_levels(n_q)
    pts = np.array([(i, q) for i in li for q in lq])
    return LabeledConstellation(pts, f"{n_i * n_q}QAM")


def cross_qam32():
    """32-point cross QAM with a quasi-Gray map.

    Built from an 8x4 Gray rectangle whose |I| = 7 columns are folded onto
    the |Q| = 5 rows.
    """
    base = rect_qam(8, 4).points.copy()
    outer = np.abs(base[:, 0]) == 7
    i, q = base[outer, 0], base[outer, 1]
    base[outer, 0] = np.sign(i) * (4 - np.abs(q))
    base[outer, 1] = np.sign(q) * 5
    return LabeledConstellation(base, "32QAM")


def _qam2d(order):
    if order == 4:
        return rect_qam(2, 2)
    if order == 8:
        return rect_qam(4, 2)
    if order == 32:
        return cross_qam32()
    side = int(round(np.sqrt(order)))
    if side * side != order or side & (side - 1):
        raise UnknownFormat(f"no {order}QAM construction")
    return rect_qam(side, side)


def pm_qam(order):
    q = _qam2d(order)
    name = "PM-QPSK" if order == 4 else f"PM-{order}QAM"
    return cartesian_product(q, q, name)


def sp_qam(order):
    """Even-parity half of PM-``order``QAM, labels compacted."""
    parent = pm_qam(order)
    grid = np.rint((parent.points - 1) / 2).astype(int)
    keep = np.flatnonzero(grid.sum(axis=1) % 2 == 0)
    return LabeledConstellation(
        parent.points[keep], f"{len(keep)}SP-QAM{order}"
    )


def ps_qpsk():
    """Polarization-switched QPSK: label = pol bit || QPSK Gray bits."""
    qpsk = rect_qam(2, 2).points
    zeros = np.zeros_like(qpsk)
    pts = np.vstack([np.hstack([qpsk, zeros]), np.hstack([zeros, qpsk])])
    return LabeledConstellation(pts, "PS-QPSK")


def twoa8psk(bits=7, ring_ratio=DEFAULT_RING_RATIO):
    """4D-2A8PSK family.

    The 7-bit member carries a ring bit (X inner / Y outer, or swapped) and
    two Gray 8PSK phase labels, so every point has the same 4D norm. With
    ``s`` the sum of the two phase indices, the 6-bit member keeps points
    whose ring bit equals ``s mod 2``; the 5-bit member keeps even ``s`` with
    ring bit ``(s / 2) mod 2``. Both keep the 7-bit labels' order.
    """
    if bits not in (5, 6, 7):
        raise BadParam(f"4D-2A8PSK supports 5, 6 or 7 bits, got {bits}")
    if not 0 < ring_ratio < 1:
        raise BadParam(f"ring ratio must lie in (0, 1), got {ring_ratio}")
    r1, r2 = ring_ratio, 1.0
    phase_of_label = np.empty(8, dtype=int)
    for n in range(8):
        phase_of_label[gray(n)] = n
    rows, keep = [], []
    for ring in (0, 1):
        rx, ry = (r1, r2) if ring == 0 else (r2, r1)
        for lx in range(8):
            for ly in range(8):
                nx, ny = phase_of_label[lx], phase_of_label[ly]
                ax = np.pi / 8 + nx * np.pi / 4
                ay = np.pi / 8 + ny * np.pi / 4
                rows.append([rx * np.cos(ax), rx * np.sin(ax), ry * np.cos(ay), ry * np.sin(ay)])
                s = nx + ny
                if bits == 7:
                    keep.append(True)
                elif bits == 6:
                    keep.append(ring == s % 2)
                else:
                    keep.append(s % 2 == 0 and ring == (s // 2) % 2)
    pts = np.array(rows)[np.array(keep)]
    return LabeledConstellation(pts, f"4D-2A8PSK-{bits}")


_SP_RE = re.compile(r"^(?:4D-)?(\d+)SP-(\d+)?QAM(\d+)?$")


def _canonical(name):
    return name.strip().upper().replace("_", "-").replace(" ", "")


_ALIASES = {
    "PM-4QAM": "PM-QPSK",
    "DP-QPSK": "PM-QPSK",
    "PM-32QAM(CROSS)": "PM-32QAM",
    "4D-SP32": "32SP-QAM8",
    "4D-SP128": "128SP-QAM16",
    "4D-SP512": "512SP-QAM32",
    "4D-SP2048": "2048SP-QAM64",
    "4D-128SP-QAM": "128SP-QAM16",
    "4D-32SP-QAM": "32SP-QAM8",
    "4D-512SP-QAM": "512SP-QAM32",
    "4D-SP128-QAM": "128SP-QAM16",
}

CATALOG_NAMES = (
    "PS-QPSK",
    "PM-QPSK",
    "32SP-QAM8",
    "4D-2A8PSK-5",
    "PM-8QAM",
    "4D-2A8PSK-6",
    "128SP-QAM16",
    "4D-2A8PSK-7",
    "PM-16QAM",
    "512SP-QAM32",
    "PM-32QAM",
    "2048SP-QAM64",
    "PM-64QAM",
)


@lru_cache(maxsize=None)
def build_catalog_format(name, ring_ratio=None):
    """Build and power-normalize a catalog format by (case-insensitive) name."""
    key = _canonical(name)
    key = _ALIASES.get(key, key)
    if ring_ratio is not None and not key.startswith("4D-2A8PSK"):
        raise BadParam(f"{name} takes no ring ratio")
    if key == "PS-QPSK":
        c = ps_qpsk()
    elif key == "PM-QPSK":
        c = pm_qam(4)
    elif m := re.fullmatch(r"PM-(\d+)QAM", key):
        c = pm_qam(int(m.group(1)))
    elif m := re.fullmatch(r"4D-2A8PSK(?:-(\d))?", key):
        bits = int(m.group(1) or 7)
        c = twoa8psk(bits, DEFAULT_RING_RATIO if ring_ratio is None else ring_ratio)
    elif m := _SP_RE.match(key):
        size = int(m.group(1))
        parent = int(m.group(2) or m.group(3) or 0)
        if parent == 0:
            parent = {32: 8, 128: 16, 512: 32, 2048: 64}.get(size, 0)
        c = sp_qam(parent) if parent else None
        if c is None or c.n_points != size:
            raise UnknownFormat(f"no SP-QAM construction for {name}")
    else:
        raise UnknownFormat(f"unknown format {name!r}; known: {', '.join(CATALOG_NAMES)}")
    return normalize_power(c).check_distinct()


def catalog_by_bits(bits):
    """Catalog names carrying ``bits`` bit/4D."""
    return [n for n in CATALOG_NAMES if build_catalog_format(n).bits == bits]
