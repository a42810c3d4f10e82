"""Dispenser: compartment grid, article packing, orifice guard, manifest memory.

The grid is a rows x cols lattice of cells.  Removable walls are modeled as
axis-aligned merge rectangles; a compartment region is either one cell or one
merge rectangle and holds at most one article.  Opening an orifice always
requires a safe-drop token issued by the mission executive.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class GuardViolation(Exception):
    """Orifice open requested without a safe-drop token: a mission-logic bug."""


class RegionOccupied(Exception):
    pass


class RegionTooSmall(Exception):
    pass


@dataclass(frozen=True)
class Article:
    id: str
    destination: str
    width_cells: int = 1
    length_cells: int = 1
    mass_kg: float = 0.5
    sensitive: bool = False
    ballast: bool = False
    contraband: bool = False
    sender: str = ""

    @property
    def footprint(self) -> int:
        return self.width_cells * self.length_cells


def screen_article(article: Article) -> bool:
    """Load-time screening: contraband never enters a manifest."""
    return not article.contraband


def screen_batch(articles: list[Article]) -> tuple[list[Article], list[Article]]:
    accepted = [a for a in articles if screen_article(a)]
    rejected = [a for a in articles if not screen_article(a)]
    return accepted, rejected


@dataclass(frozen=True)
class Region:
    """One compartment region: rectangle of cells (row0, col0, n_rows, n_cols)."""

    id: str
    row0: int
    col0: int
    n_rows: int
    n_cols: int

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(r, c) for r in range(self.row0, self.row0 + self.n_rows)
                for c in range(self.col0, self.col0 + self.n_cols)]


@dataclass(frozen=True)
class ManifestEntry:
    region_id: str
    article_id: str
    destination: str


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def destinations(self) -> list[str]:
        return [e.destination for e in self.entries]

    def article_ids(self) -> list[str]:
        return [e.article_id for e in self.entries]


@dataclass
class Placement:
    article_id: str
    region_id: str


@dataclass
class Assignment:
    placements: list[Placement] = field(default_factory=list)
    unplaced: list[str] = field(default_factory=list)


def _cell_region_id(r: int, c: int) -> str:
    return f"c{r}_{c}"


def _merge_region_id(r: int, c: int, n_rows: int, n_cols: int) -> str:
    return f"m{r}_{c}_{n_rows}x{n_cols}"


class CompartmentGrid:
    """Mutable grid owned by one aircraft's mission loop."""

    def __init__(self, rows: int, cols: int) -> None:
        if rows < 1 or cols < 1:
            raise ValueError("grid dimensions must be positive")
        self.rows = rows
        self.cols = cols
        # cell -> region id covering it
        self.cell_region: dict[tuple[int, int], str] = {}
        self.regions: dict[str, Region] = {}
        self.occupant: dict[str, str] = {}        # region id -> article id
        self.orifice_open: dict[str, bool] = {}   # region id -> open?
        for r in range(rows):
            for c in range(cols):
                self._add_region(Region(_cell_region_id(r, c), r, c, 1, 1))

    def _add_region(self, region: Region) -> None:
        self.regions[region.id] = region
        self.orifice_open[region.id] = False
        for cell in region.cells:
            self.cell_region[cell] = region.id

    def _remove_region(self, region_id: str) -> None:
        del self.regions[region_id]
        del self.orifice_open[region_id]

    def merge(self, row0: int, col0: int, n_rows: int, n_cols: int) -> Region:
        """Remove the walls inside a rectangle, producing one larger region."""
        if row0 < 0 or col0 < 0 or row0 + n_rows > self.rows or col0 + n_cols > self.cols:
            raise ValueError("merge rectangle out of bounds")
        merged = Region(_merge_region_id(row0, col0, n_rows, n_cols), row0, col0, n_rows, n_cols)
        covered = set(merged.cells)
        for cell in covered:
            rid = self.cell_region[cell]
            region = self.regions[rid]
            if rid in self.occupant:
                raise RegionOccupied(rid)
            if not set(region.cells) <= covered:
                raise ValueError("merge rectangle cuts across an existing region")
        for rid in {self.cell_region[cell] for cell in covered}:
            self._remove_region(rid)
        self._add_region(merged)
        return merged

    def region_free(self, region_id: str) -> bool:
        return region_id not in self.occupant

    def free_cells(self) -> set[tuple[int, int]]:
        return {cell for cell, rid in self.cell_region.items()
                if rid not in self.occupant and self.regions[rid].n_rows == 1
                and self.regions[rid].n_cols == 1}

    def place(self, article: Article, region_id: str) -> None:
        region = self.regions[region_id]
        if region_id in self.occupant:
            raise RegionOccupied(region_id)
        if region.n_cols < article.width_cells or region.n_rows < article.length_cells:
            raise RegionTooSmall(region_id)
        self.occupant[region_id] = article.id

    def remove(self, region_id: str) -> str:
        return self.occupant.pop(region_id)

    def set_orifice(self, region_id: str, desired: str, guard=None) -> None:
        """Open (token required) or close (always allowed) one orifice. Idempotent."""
        if region_id not in self.regions:
            raise KeyError(region_id)
        if desired == "open":
            if guard is None:
                raise GuardViolation(f"open requested on {region_id} without a safe-drop token")
            self.orifice_open[region_id] = True
        elif desired == "closed":
            self.orifice_open[region_id] = False
        else:
            raise ValueError(f"bad orifice state {desired!r}")

    def snapshot(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "regions": {rid: [reg.row0, reg.col0, reg.n_rows, reg.n_cols]
                        for rid, reg in sorted(self.regions.items())},
            "occupant": dict(sorted(self.occupant.items())),
            "orifice_open": {rid: v for rid, v in sorted(self.orifice_open.items()) if v},
        }


def _ffd_order(articles: list[Article]) -> list[Article]:
    # Decreasing footprint; ties: larger width first, then id ascending.
    return sorted(articles, key=lambda a: (-a.footprint, -a.width_cells, a.id))


def _find_slot(grid: CompartmentGrid, width: int, length: int) -> tuple[int, int] | None:
    """Row-major scan for the first top-left corner with length x width free cells."""
    free = grid.free_cells()
    for r in range(grid.rows - length + 1):
        for c in range(grid.cols - width + 1):
            if all((r + dr, c + dc) in free for dr in range(length) for dc in range(width)):
                return r, c
    return None


def assign_articles(articles: list[Article], grid: CompartmentGrid) -> Assignment:
    """First-fit-decreasing placement; overflow goes to the unplaced list."""
    assignment = Assignment()
    for article in _ffd_order(articles):
        slot = _find_slot(grid, article.width_cells, article.length_cells)
        if slot is None:
            assignment.unplaced.append(article.id)
            continue
        r, c = slot
        if article.width_cells == 1 and article.length_cells == 1:
            region_id = grid.cell_region[(r, c)]
        else:
            region_id = grid.merge(r, c, article.length_cells, article.width_cells).id
        grid.place(article, region_id)
        assignment.placements.append(Placement(article.id, region_id))
    return assignment


def read_manifest(grid: CompartmentGrid, assignment: Assignment,
                  articles_by_id: dict[str, Article]) -> Manifest:
    """Manifest memory rebuilt from the applied assignment, sorted by region id."""
    entries = []
    for placement in assignment.placements:
        article = articles_by_id[placement.article_id]
        entries.append(ManifestEntry(placement.region_id, article.id, article.destination))
    entries.sort(key=lambda e: e.region_id)
    return Manifest(tuple(entries))


def top_load(grid: CompartmentGrid, article: Article, region_id: str,
             guard) -> ManifestEntry:
    """Crowd-sourcing pickup: place an article through a top orifice while landed."""
    if guard is None or getattr(guard, "kind", None) != "landed":
        raise GuardViolation("top loading requires a landed-kind token")
    if region_id not in grid.regions:
        raise KeyError(region_id)
    if not grid.region_free(region_id):
        raise RegionOccupied(region_id)
    region = grid.regions[region_id]
    if region.n_cols < article.width_cells or region.n_rows < article.length_cells:
        raise RegionTooSmall(region_id)
    grid.set_orifice(region_id, "open", guard)
    grid.place(article, region_id)
    grid.set_orifice(region_id, "closed")
    return ManifestEntry(region_id, article.id, article.destination)
