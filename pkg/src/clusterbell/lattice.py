"""Finite spin lattices with a fixed metric, regions and region separations.

Sites carry 1-based integer coordinates (``(j,)`` on chains, ``(j, s)`` on
grids). Internally a site is addressed by its 0-based index in row-major
order; regions store sorted indices.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DisjointnessError, InvalidRegionError, InvalidSizeError

#: Default upper bound on lattice sizes that get materialised as states.
MAX_SITES = 14


class MetricKind(str, enum.Enum):
    PATH = "path"
    MANHATTAN = "manhattan"


@dataclass(frozen=True)
class Region:
    site_indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.site_indices)
        if not idx:
            raise InvalidRegionError("region must contain at least one site")
        if len(set(idx)) != len(idx):
            raise InvalidRegionError(f"duplicate sites in region {idx}")
        if min(idx) < 0:
            raise InvalidRegionError(f"negative site index in region {idx}")
        object.__setattr__(self, "site_indices", tuple(sorted(idx)))

    @property
    def size(self) -> int:
        return len(self.site_indices)

    def __len__(self) -> int:
        return len(self.site_indices)

    def __iter__(self):
        return iter(self.site_indices)

    def overlaps(self, other: "Region") -> bool:
        return not set(self.site_indices).isdisjoint(other.site_indices)


@dataclass(frozen=True)
class Lattice:
    sites: tuple[tuple[int, ...], ...]
    metric_kind: MetricKind
    shape: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.sites)) != len(self.sites):
            raise InvalidSizeError("lattice sites must be distinct")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.sites)})

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def kind(self) -> str:
        return "chain" if self.metric_kind is MetricKind.PATH else "grid"

    def __len__(self) -> int:
        return len(self.sites)

    def distance(self, i: int, j: int) -> int:
        a, b = self.sites[i], self.sites[j]
        return sum(abs(x - y) for x, y in zip(a, b))

    @property
    def diameter(self) -> int:
        return sum(n - 1 for n in self.shape)

    def index_of(self, coord) -> int:
        key = (coord,) if isinstance(coord, int) else tuple(coord)
        try:
            return self._index[key]
        except KeyError:
            raise InvalidRegionError(f"site {coord!r} is not on the lattice") from None

    def region(self, *coords) -> Region:
        """Region from site coordinates (ints on chains, tuples on grids)."""
        return Region(tuple(self.index_of(c) for c in coords))

    def region_from_indices(self, indices: Iterable[int]) -> Region:
        reg = Region(tuple(indices))
        self.check_region(reg)
        return reg

    def check_region(self, region: Region) -> None:
        if region.site_indices[-1] >= self.size:
            raise InvalidRegionError(
                f"region {region.site_indices} exceeds lattice of {self.size} sites"
            )

    def coords(self, region: Region) -> list[tuple[int, ...]]:
        return [self.sites[i] for i in region.site_indices]

    def region_diameter(self, region: Region) -> int:
        self.check_region(region)
        return max(
            (self.distance(a, b) for a, b in itertools.combinations(region.site_indices, 2)),
            default=0,
        )

    def to_dict(self) -> dict:
        if self.metric_kind is MetricKind.PATH:
            return {"kind": "chain", "L": self.shape[0]}
        return {"kind": "grid", "L": list(self.shape)}


def build_chain(L: int) -> Lattice:
    if int(L) < 1:
        raise InvalidSizeError(f"chain length must be >= 1, got {L}")
    L = int(L)
    return Lattice(tuple((j,) for j in range(1, L + 1)), MetricKind.PATH, (L,))


def build_grid(L1: int, L2: int) -> Lattice:
    if int(L1) < 1 or int(L2) < 1:
        raise InvalidSizeError(f"grid dimensions must be >= 1, got {L1}x{L2}")
    sites = tuple((j, s) for j in range(1, int(L1) + 1) for s in range(1, int(L2) + 1))
    return Lattice(sites, MetricKind.MANHATTAN, (int(L1), int(L2)))


def region_distance(lat: Lattice, X: Region, Y: Region) -> int:
    lat.check_region(X)
    lat.check_region(Y)
    return min(lat.distance(a, b) for a in X.site_indices for b in Y.site_indices)


def min_separation(lat: Lattice, regions: Sequence[Region]) -> int:
    """Smallest pairwise distance among disjoint regions (the separation tau)."""
    if len(regions) < 2:
        raise InvalidRegionError("separation needs at least two regions")
    for X, Y in itertools.combinations(regions, 2):
        lat.check_region(X)
        lat.check_region(Y)
        if X.overlaps(Y):
            raise DisjointnessError(
                f"regions {X.site_indices} and {Y.site_indices} share a site"
            )
    return min(region_distance(lat, X, Y) for X, Y in itertools.combinations(regions, 2))


def lattice_from_spec(spec: dict) -> Lattice:
    kind = spec.get("kind")
    if kind == "chain":
        return build_chain(spec["L"])
    if kind == "grid":
        L1, L2 = spec["L"]
        return build_grid(L1, L2)
    raise InvalidSizeError(f"unknown lattice kind {kind!r}")


def region_from_spec(lat: Lattice, sites: Sequence) -> Region:
    """Normalise a config region: a list of coordinates (ints or [j, s] pairs)."""
    return lat.region(*[s if isinstance(s, int) else tuple(s) for s in sites])
