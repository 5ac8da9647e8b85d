"""Mesh loading and synthetic scene generation.

Every vertex gets a unique, contiguous, load-ordered integer id; the id is
the feature descriptor for the whole pipeline. Duplicate positions are kept
as distinct vertices on purpose. ASCII OBJ and PLY only.
"""

import os
from dataclasses import dataclass, field

import numpy as np


class MeshParseError(ValueError):
    """Raised on malformed mesh files; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        loc = f"{path or '<mesh>'}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line


class MeshModel:
    """Indexed vertex set with stable per-vertex ids and a model transform."""

    __slots__ = ("vertices", "ids", "model_transform")

    def __init__(self, vertices, model_transform=None):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ValueError("mesh contains non-finite vertex coordinates")
        self.vertices = vertices
        self.ids = np.arange(len(vertices), dtype=np.int64)
        if model_transform is None:
            model_transform = np.eye(4)
        self.model_transform = np.asarray(model_transform, dtype=float).reshape(4, 4)
        if not np.array_equal(self.model_transform[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("model_transform must be affine (bottom row 0 0 0 1)")
        self.vertices.setflags(write=False)
        self.ids.setflags(write=False)
        self.model_transform.setflags(write=False)

    def __len__(self):
        return len(self.vertices)

    def world_vertices(self):
        """Vertices with the model transform applied."""
        hom = np.empty((len(self.vertices), 4))
        hom[:, :3] = self.vertices
        hom[:, 3] = 1.0
        out = hom @ self.model_transform.T
        return out[:, :3] / out[:, 3:4]


@dataclass(frozen=True)
class SceneSpec:
    """Deterministic recipe for a scene; equal specs give bit-identical meshes."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    KINDS = ("obj_file", "ply_file", "grid", "box_room", "seeded_point_cloud")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}, expected one of {self.KINDS}")


def _parse_obj(lines, path):
    vertices = []
    face_refs = []  # (line_no, [indices])
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshParseError("vertex line needs 3 coordinates", path, line_no)
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate in {line!r}", path, line_no)
        elif parts[0] == "f":
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                try:
                    idx.append(int(head))
                except ValueError:
                    raise MeshParseError(f"bad face index {token!r}", path, line_no)
            if len(idx) < 3:
                raise MeshParseError("face needs at least 3 indices", path, line_no)
            face_refs.append((line_no, idx))
        # vn/vt/o/g/s/usemtl/mtllib lines are ignored
    n = len(vertices)
    if n == 0:
        raise MeshParseError("no vertices", path)
    for line_no, idx in face_refs:
        for i in idx:
            if i < 1 or i > n:
                raise MeshParseError(
                    f"face references vertex {i} of {n}", path, line_no
                )
    return np.array(vertices, dtype=float)


def _parse_ply(lines, path):
    it = iter(enumerate(lines, start=1))
    try:
        line_no, magic = next(it)
    except StopIteration:
        raise MeshParseError("no vertices", path)
    if magic.strip() != "ply":
        raise MeshParseError("missing 'ply' magic", path, 1)

    n_vertices = None
    n_faces = 0
    vertex_props = []
    current_element = None
    saw_format = False
    for line_no, raw in it:
        parts = raw.strip().split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise MeshParseError("only ascii PLY is supported", path, line_no)
            saw_format = True
        elif parts[0] == "element":
            current_element = parts[1]
            if parts[1] == "vertex":
                n_vertices = int(parts[2])
            elif parts[1] == "face":
                n_faces = int(parts[2])
        elif parts[0] == "property":
            if current_element == "vertex" and parts[1] != "list":
                vertex_props.append(parts[-1])
        elif parts[0] == "end_header":
            break
    else:
        raise MeshParseError("missing end_header", path)
    if not saw_format:
        raise MeshParseError("missing format line", path)
    if not n_vertices:
        raise MeshParseError("no vertices", path)
    try:
        cols = [vertex_props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise MeshParseError("vertex element lacks x/y/z properties", path)

    vertices = np.empty((n_vertices, 3))
    rows = 0
    faces = []
    for line_no, raw in it:
        parts = raw.split()
        if not parts:
            continue
        if rows < n_vertices:
            if len(parts) < len(vertex_props):
                raise MeshParseError("short vertex row", path, line_no)
            try:
                for k, c in enumerate(cols):
                    vertices[rows, k] = float(parts[c])
            except ValueError:
                raise MeshParseError(f"bad vertex value in {raw.strip()!r}", path, line_no)
            rows += 1
        elif len(faces) < n_faces:
            try:
                count = int(parts[0])
                idx = [int(tok) for tok in parts[1 : 1 + count]]
            except ValueError:
                raise MeshParseError(f"bad face row {raw.strip()!r}", path, line_no)
            for i in idx:
                if i < 0 or i >= n_vertices:
                    raise MeshParseError(
                        f"face references vertex {i} of {n_vertices}", path, line_no
                    )
            faces.append(idx)
    if rows < n_vertices:
        raise MeshParseError(
            f"vertex element declares {n_vertices} rows, found {rows}", path
        )
    return vertices


def load_mesh(path, fmt=None):
    """Load an ASCII OBJ or PLY file into a MeshModel.

    Faces are validated (an out-of-range index is an error) but not stored;
    only vertices matter downstream. Ids follow file order.
    """
    if fmt is None:
        fmt = os.path.splitext(str(path))[1].lstrip(".").lower()
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if fmt == "obj":
        vertices = _parse_obj(lines, str(path))
    elif fmt == "ply":
        vertices = _parse_ply(lines, str(path))
    else:
        raise ValueError(f"unsupported mesh format {fmt!r} (expected obj or ply)")
    return MeshModel(vertices)


def save_mesh_obj(mesh, path):
    """Write vertices as an OBJ that round-trips through load_mesh exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")


def _grid_vertices(n, spacing):
    xs = np.arange(n) * spacing
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(n * n)])


def _box_room_vertices(width, height, depth, subdivisions):
    """Six inward-facing walls, each an independent (k+1)^2 grid.

    Wall grids are not welded: edge and corner positions appear once per
    adjoining wall, each with its own id (6 * (k+1)^2 vertices total).
    """
    k = subdivisions
    hw, hh, hd = width / 2.0, height / 2.0, depth / 2.0
    u = np.linspace(-1.0, 1.0, k + 1)
    gu, gv = np.meshgrid(u, u, indexing="xy")
    gu = gu.ravel()
    gv = gv.ravel()
    ones = np.ones_like(gu)
    walls = [
        np.column_stack([-hw * ones, gu * hh, gv * hd]),  # x = -w/2
        np.column_stack([+hw * ones, gu * hh, gv * hd]),  # x = +w/2
        np.column_stack([gu * hw, -hh * ones, gv * hd]),  # floor
        np.column_stack([gu * hw, +hh * ones, gv * hd]),  # ceiling
        np.column_stack([gu * hw, gv * hh, -hd * ones]),  # z = -d/2
        np.column_stack([gu * hw, gv * hh, +hd * ones]),  # z = +d/2
    ]
    return np.vstack(walls)


def generate_scene(spec):
    """Build the mesh a SceneSpec describes; pure function of its inputs."""
    p = spec.params
    if spec.kind in ("obj_file", "ply_file"):
        return load_mesh(p["path"], fmt=spec.kind.split("_")[0])
    if spec.kind == "grid":
        n = int(p.get("n", 10))
        spacing = float(p.get("spacing", 1.0))
        if n < 1 or spacing <= 0:
            raise ValueError("grid needs n >= 1 and spacing > 0")
        return MeshModel(_grid_vertices(n, spacing))
    if spec.kind == "box_room":
        width = float(p.get("width", 8.0))
        height = float(p.get("height", 3.0))
        depth = float(p.get("depth", 8.0))
        k = int(p.get("subdivisions", 10))
        if min(width, height, depth) <= 0 or k < 1:
            raise ValueError("box_room needs positive dimensions and subdivisions >= 1")
        return MeshModel(_box_room_vertices(width, height, depth, k))
    if spec.kind == "seeded_point_cloud":
        n = int(p.get("n", 600))
        extent = float(p.get("extent", 10.0))
        if n < 1 or extent <= 0:
            raise ValueError("seeded_point_cloud needs n >= 1 and extent > 0")
        rng = np.random.default_rng(spec.seed)
        pts = rng.uniform(-extent / 2.0, extent / 2.0, size=(n, 3))
        return MeshModel(pts)
    raise ValueError(f"unknown scene kind {spec.kind!r}")
