"""Reader (and a small writer) for ASCII Gmsh MSH 2.2 / 4.1 files.

Only linear simplices are accepted as volume elements: 3-node triangles
(type 2) in 2d and 4-node tetrahedra (type 4) in 3d.  Lower-dimensional
elements (points, lines, boundary triangles) are skipped.
"""
from __future__ import annotations

import os

import numpy as np

from .mesh import Mesh, MeshError

# element type -> (topological dim, node count)
_ELEMENTS = {15: (0, 1), 1: (1, 2), 2: (2, 3), 3: (2, 4), 4: (3, 4),
             5: (3, 8), 6: (3, 6), 7: (3, 5), 8: (1, 3), 9: (2, 6), 11: (3, 10)}
_SIMPLEX = {2: 2, 3: 4}


class GmshError(MeshError):
    """Raised for unreadable or unsupported MSH input."""


def _sections(lines):
    sections = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            end = "$End" + name
            j = i + 1
            while j < len(lines) and lines[j].strip() != end:
                j += 1
            if j == len(lines):
                raise GmshError(f"unterminated section ${name}")
            sections[name] = lines[i + 1:j]
            i = j
        i += 1
    return sections


def _ints(line):
    return [int(t) for t in line.split()]


def _read_v2(sec):
    nodes = sec["Nodes"]
    n = int(nodes[0])
    tags = np.empty(n, dtype=np.int64)
    xyz = np.empty((n, 3))
    for i, line in enumerate(nodes[1:n + 1]):
        parts = line.split()
        tags[i] = int(parts[0])
        xyz[i] = [float(t) for t in parts[1:4]]
    elements = []
    lines = sec["Elements"]
    for line in lines[1:int(lines[0]) + 1]:
        v = _ints(line)
        etype, ntags = v[1], v[2]
        elements.append((etype, v[3 + ntags:]))
    return tags, xyz, elements


def _read_v4(sec):
    nodes = sec["Nodes"]
    n_blocks, n_nodes = _ints(nodes[0])[:2]
    tags = np.empty(n_nodes, dtype=np.int64)
    xyz = np.empty((n_nodes, 3))
    pos, k = 1, 0
    for _ in range(n_blocks):
        _, _, parametric, nb = _ints(nodes[pos])
        if parametric:
            raise GmshError("parametric node coordinates are not supported")
        pos += 1
        tags[k:k + nb] = [int(nodes[pos + i]) for i in range(nb)]
        pos += nb
        for i in range(nb):
            xyz[k + i] = [float(t) for t in nodes[pos + i].split()[:3]]
        pos += nb
        k += nb
    elements = []
    lines = sec["Elements"]
    n_blocks = _ints(lines[0])[0]
    pos = 1
    for _ in range(n_blocks):
        _, _, etype, nb = _ints(lines[pos])
        pos += 1
        for i in range(nb):
            elements.append((etype, _ints(lines[pos + i])[1:]))
        pos += nb
    return tags, xyz, elements


def read_gmsh(path) -> Mesh:
    """Read an ASCII MSH 2.2 or 4.1 file into a :class:`Mesh`.

    Raises
    ------
    GmshError
        On binary files, unsupported versions, mixed or non-simplex volume
        elements, or a facet shared by more than two cells.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise GmshError(f"cannot read {os.fspath(path)}: {exc}") from exc
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise GmshError("binary MSH files are not supported") from None
    sec = _sections(text.splitlines())
    if "MeshFormat" not in sec:
        raise GmshError("missing $MeshFormat section")
    fmt = sec["MeshFormat"][0].split()
    version, file_type = fmt[0], int(fmt[1])
    if file_type != 0:
        raise GmshError("binary MSH files are not supported")
    if version.startswith("2."):
        tags, xyz, elements = _read_v2(sec)
    elif version == "4.1":
        tags, xyz, elements = _read_v4(sec)
    else:
        raise GmshError(f"unsupported MSH version {version}")

    for etype, _ in elements:
        if etype not in _ELEMENTS:
            raise GmshError(f"unknown element type {etype}")
    top = max((_ELEMENTS[e][0] for e, _ in elements), default=0)
    if top not in (2, 3):
        raise GmshError("no 2d or 3d volume elements found")
    volume = [(e, c) for e, c in elements if _ELEMENTS[e][0] == top]
    kinds = {e for e, _ in volume}
    if kinds != {_SIMPLEX[top]}:
        raise GmshError(f"unsupported or mixed volume element types {sorted(kinds)}")

    dim = top
    if dim == 2 and np.any(np.abs(xyz[:, 2]) > 0):
        raise GmshError("2d mesh has non-planar nodes")
    cells_tags = np.array([c for _, c in volume], dtype=np.int64)
    # compact to vertices referenced by the volume elements
    used = np.unique(cells_tags)
    lookup = {int(t): i for i, t in enumerate(tags)}
    try:
        rows = np.array([lookup[int(t)] for t in used])
    except KeyError as exc:
        raise GmshError(f"element references unknown node {exc}") from None
    cells = np.searchsorted(used, cells_tags)
    try:
        return Mesh.from_arrays(xyz[rows, :dim], cells)
    except GmshError:
        raise
    except MeshError as exc:
        raise GmshError(f"{os.fspath(path)}: {exc}") from exc


def write_gmsh(path, mesh: Mesh, version: str = "2.2"):
    """Write ``mesh`` as an ASCII MSH file (volume elements only)."""
    etype = _SIMPLEX[mesh.dim]
    xyz = np.zeros((len(mesh.vertices), 3))
    xyz[:, :mesh.dim] = mesh.vertices
    out = ["$MeshFormat", f"{version} 0 8", "$EndMeshFormat"]
    if version == "2.2":
        out += ["$Nodes", str(len(xyz))]
        out += [f"{i + 1} {x:.17g} {y:.17g} {z:.17g}" for i, (x, y, z) in enumerate(xyz)]
        out += ["$EndNodes", "$Elements", str(mesh.n_cells)]
        out += [f"{i + 1} {etype} 2 1 1 " + " ".join(str(v + 1) for v in c)
                for i, c in enumerate(mesh.cells)]
        out += ["$EndElements"]
    elif version == "4.1":
        n, m = len(xyz), mesh.n_cells
        out += ["$Nodes", f"1 {n} 1 {n}", f"{mesh.dim} 1 0 {n}"]
        out += [str(i + 1) for i in range(n)]
        out += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in xyz]
        out += ["$EndNodes", "$Elements", f"1 {m} 1 {m}", f"{mesh.dim} 1 {etype} {m}"]
        out += [f"{i + 1} " + " ".join(str(v + 1) for v in c)
                for i, c in enumerate(mesh.cells)]
        out += ["$EndElements"]
    else:
        raise GmshError(f"unsupported MSH version {version}")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
