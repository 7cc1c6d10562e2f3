"""H4+ nuclear configurations: the tetrahedral reference, distortions and scan grids."""

from __future__ import annotations

from dataclasses import dataclass
import hashlib

import numpy as np

ANGSTROM_TO_BOHR = 1.8897259886

_TD_POSITIONS = (
    (0.000000000000, 0.000000000000, 1.142278716718),
    (0.807713026596, 0.000000000000, 0.000000000000),
    (-0.403856513298, 0.699500000000, 0.000000000000),
    (-0.403856513298, -0.699500000000, 0.000000000000),
)


@dataclass(frozen=True)
class Atom:
    label: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class Geometry:
    """Four hydrogen nuclei, positions in Angstrom."""

    atoms: tuple[Atom, ...]
    provenance: str = "reference"

    def __post_init__(self):
        if len(self.atoms) != 4:
            raise ValueError(f"H4+ geometry needs 4 atoms, got {len(self.atoms)}")
        for atom in self.atoms:
            if atom.label != "H":
                raise ValueError(f"only hydrogen atoms are supported, got {atom.label!r}")
            if not np.all(np.isfinite(atom.position)):
                raise ValueError("non-finite coordinate")

    @property
    def coords(self) -> np.ndarray:
        """(4, 3) array in Angstrom."""
        return np.array([a.position for a in self.atoms], dtype=float)

    @property
    def coords_bohr(self) -> np.ndarray:
        return self.coords * ANGSTROM_TO_BOHR

    @classmethod
    def from_coords(cls, coords, provenance: str = "distorted") -> Geometry:
        coords = np.asarray(coords, dtype=float).reshape(-1, 3)
        atoms = tuple(Atom("H", tuple(float(v) for v in row)) for row in coords)
        return cls(atoms, provenance)

    def translated(self, shift) -> Geometry:
        return Geometry.from_coords(self.coords + np.asarray(shift, dtype=float), self.provenance)

    def digest(self) -> str:
        """Short hash of the coordinates, used to tag exported orbitals."""
        return hashlib.sha1(np.round(self.coords, 12).tobytes()).hexdigest()[:12]

    def to_xyz(self, comment: str = "") -> str:
        lines = [str(len(self.atoms)), comment or self.provenance]
        for a in self.atoms:
            x, y, z = a.position
            lines.append(f"{a.label} {x:.12f} {y:.12f} {z:.12f}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_xyz(cls, text: str) -> Geometry:
        lines = text.strip("\n").splitlines()
        natoms = int(lines[0].split()[0])
        atoms = []
        for line in lines[2 : 2 + natoms]:
            label, x, y, z = line.split()[:4]
            atoms.append(Atom(label, (float(x), float(y), float(z))))
        prov = lines[1].strip() if lines[1].strip() in ("reference", "distorted") else "distorted"
        return cls(tuple(atoms), prov)


@dataclass(frozen=True)
class Distortion:
    """Shifts in Angstrom: atom 2 along x, atom 3 along y, atom 1 along z."""

    dx2: float = 0.0
    dy3: float = 0.0
    dz1: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.dx2, self.dy3, self.dz1])):
            raise ValueError("non-finite distortion")

    def __add__(self, other: Distortion) -> Distortion:
        return Distortion(self.dx2 + other.dx2, self.dy3 + other.dy3, self.dz1 + other.dz1)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx2, self.dy3, self.dz1)


def td_reference() -> Geometry:
    """Tetrahedral H4+ reference (FCI/STO-3G optimized), atom order H1..H4."""
    return Geometry(tuple(Atom("H", p) for p in _TD_POSITIONS), "reference")


def distort(base: Geometry, d: Distortion) -> Geometry:
    coords = base.coords
    coords[0, 2] += d.dz1
    coords[1, 0] += d.dx2
    coords[2, 1] += d.dy3
    return Geometry.from_coords(coords, "distorted")


def scan_grid(start: float = -0.30, stop: float = 0.30, step: float = 0.01) -> np.ndarray:
    """Uniform dz1 grid, endpoints included; values rounded to kill float drift."""
    n = int(round((stop - start) / step)) + 1
    return np.round(start + step * np.arange(n), 10)


def scan_geometries(grid, dx2: float = 0.1, dy3: float = 0.05, base: Geometry | None = None):
    base = base or td_reference()
    return [distort(base, Distortion(dx2, dy3, float(dz1))) for dz1 in grid]
