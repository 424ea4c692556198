"""Writers for VTK snapshots, CSV tables and JSON records.

Snapshots use the legacy ASCII VTK unstructured-grid format with one polygon
per cell and all fields attached as cell data, which every common viewer
reads.  All writers format numbers with repr-faithful precision and iterate
in index order, so outputs are deterministic.
"""

from __future__ import annotations

import csv
import json
from typing import Iterable, Mapping

import numpy as np

from .mesh import PolytopalMesh

VTK_POLYGON = 7


def write_vtk(path, mesh: PolytopalMesh, cell_fields: Mapping[str, np.ndarray],
              title: str = "polytopal cell data") -> None:
    """Write the mesh and per-cell scalar fields as a legacy VTK file."""
    lines = []
    lines.append("# vtk DataFile Version 2.0")
    lines.append(title[:255])
    lines.append("ASCII")
    lines.append("DATASET UNSTRUCTURED_GRID")
    lines.append(f"POINTS {mesh.n_vertices} double")
    for p in mesh.vertices:
        lines.append(f"{p[0]:.17g} {p[1]:.17g} 0")
    size = sum(loc.size + 1 for loc in mesh.cell_vertices)
    lines.append(f"CELLS {mesh.n_cells} {size}")
    for loc in mesh.cell_vertices:
        lines.append(" ".join([str(loc.size)] + [str(int(v)) for v in loc]))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend([str(VTK_POLYGON)] * mesh.n_cells)
    if cell_fields:
        lines.append(f"CELL_DATA {mesh.n_cells}")
        for name in cell_fields:
            values = np.asarray(cell_fields[name], dtype=float)
            if values.shape != (mesh.n_cells,):
                raise ValueError(
                    f"field {name!r} has shape {values.shape}, "
                    f"expected ({mesh.n_cells},)")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.17g}" for v in values)
    with open(path, "w") as f:
        f.write("\n".join(lines))
        f.write("\n")


def write_csv(path, header: Iterable[str], rows: Iterable) -> None:
    """Write rows of numbers/strings as CSV with 12 significant digits."""

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return f"{v:.12g}"
        return str(v)

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
