"""On-disk formats: mesh text files, binary snapshot sets, binary models,
CSV emission, and the shared error metric.

Binary layouts (all integers little-endian u32, floats little-endian f64):

snapshot file
    "KPSS" | version | n | n_frames | flags | h
    then n_frames frames of 6n f64 (lifted states, displacement block first);
    flags bit 0: an n x 3 rest-position block follows the frames;
    flags bit 1: (n_frames - 1) frames of 6n f64 force lifts follow.

model file
    "KPDM" | version | n | r | h
    then row-major f64 blocks: Re(modes), Im(modes), Re(eigenvalues),
    Im(eigenvalues), left basis, Re(reduced eigenvectors),
    Im(reduced eigenvectors).  Shapes are (6n, r), (r,), (6n, r), (r, r).
"""
from __future__ import annotations

import struct

import numpy as np

from .dmdfit import KoopmanModel, SnapshotSet
from .refsim import ElasticModel
from .statespace import ForceLift, LiftedState
from .errors import DimensionError, DomainError

SNAPSHOT_MAGIC = b"KPSS"
MODEL_MAGIC = b"KPDM"
FORMAT_VERSION = 1

_FLAG_REST = 1
_FLAG_FORCES = 2


# -- mesh text format ---------------------------------------------------------

def parse_mesh(text: str):
    """Parse the plain-text mesh format.

    Lines: "v x y z" vertices, "s i j stiffness" springs (rest length taken
    from rest positions), "f i" fixed vertices, "m value" uniform mass or
    "mv i value" per-vertex mass, "g x y z" gravity,
    "c chamber_id a b c" chamber triangle faces.  "#" starts a comment.

    Returns (ElasticModel, chambers) where chambers is a tuple of face lists
    ordered by chamber id.
    """
    verts, springs, fixed = [], [], set()
    masses = {}
    uniform_mass = 1.0
    gravity = np.zeros(3)
    chambers: dict[int, list] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        arity = {"v": 4, "s": 4, "f": 2, "m": 2, "mv": 3, "g": 4, "c": 5}
        try:
            if tok[0] in arity and len(tok) != arity[tok[0]]:
                raise ValueError(f"'{tok[0]}' record needs {arity[tok[0]] - 1} fields")
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "s":
                springs.append((int(tok[1]), int(tok[2]), float(tok[3])))
            elif tok[0] == "f":
                fixed.add(int(tok[1]))
            elif tok[0] == "m":
                uniform_mass = float(tok[1])
            elif tok[0] == "mv":
                masses[int(tok[1])] = float(tok[2])
            elif tok[0] == "g":
                gravity = np.array([float(t) for t in tok[1:4]])
            elif tok[0] == "c":
                chambers.setdefault(int(tok[1]), []).append(
                    (int(tok[2]), int(tok[3]), int(tok[4])))
            else:
                raise DomainError(f"mesh line {lineno}: unknown record '{tok[0]}'")
        except (ValueError, IndexError) as exc:
            raise DomainError(f"mesh line {lineno}: {raw!r}: {exc}") from exc
    rest = np.asarray(verts, dtype=np.float64)
    if rest.size == 0:
        raise DomainError("mesh has no vertices")
    mass_vec = np.full(rest.shape[0], uniform_mass)
    for i, mv in masses.items():
        mass_vec[i] = mv
    spring_list = []
    for i, j, k in springs:
        length = float(np.linalg.norm(rest[i] - rest[j]))
        spring_list.append((i, j, length, k))
    model = ElasticModel(rest_positions=rest, springs=tuple(spring_list),
                         vertex_masses=mass_vec, fixed_vertices=frozenset(fixed),
                         gravity=gravity)
    chamber_faces = tuple(tuple(chambers[cid]) for cid in sorted(chambers))
    return model, chamber_faces


def read_mesh(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mesh(fh.read())


def format_mesh(model: ElasticModel, chambers=()) -> str:
    lines = []
    for p in model.rest_positions:
        lines.append(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    for i, j, _length, k in model.springs:
        lines.append(f"s {i} {j} {float(k)!r}")
    for i in sorted(model.fixed_vertices):
        lines.append(f"f {i}")
    for i, m in enumerate(model.vertex_masses):
        lines.append(f"mv {i} {float(m)!r}")
    if np.any(model.gravity):
        g = model.gravity
        lines.append(f"g {float(g[0])!r} {float(g[1])!r} {float(g[2])!r}")
    for cid, faces in enumerate(chambers):
        for a, b, c in faces:
            lines.append(f"c {cid} {a} {b} {c}")
    return "\n".join(lines) + "\n"


# -- snapshot files -----------------------------------------------------------

def write_snapshots(path, snaps: SnapshotSet) -> None:
    n = snaps.states[0].n_vertices
    flags = 0
    if snaps.rest_positions is not None:
        flags |= _FLAG_REST
    if snaps.force_lifts:
        flags |= _FLAG_FORCES
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, n, len(snaps.states), flags))
        fh.write(struct.pack("<d", snaps.h))
        for s in snaps.states:
            fh.write(s.values.astype("<f8").tobytes())
        if flags & _FLAG_REST:
            fh.write(np.asarray(snaps.rest_positions, dtype="<f8").tobytes())
        if flags & _FLAG_FORCES:
            for f in snaps.force_lifts:
                fh.write(f.values.astype("<f8").tobytes())


def read_snapshots(path) -> SnapshotSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise DomainError(f"not a snapshot file (magic {magic!r})")
        version, n, n_frames, flags = struct.unpack("<IIII", fh.read(16))
        if version != FORMAT_VERSION:
            raise DomainError(f"unsupported snapshot version {version}")
        (h,) = struct.unpack("<d", fh.read(8))
        dim = 6 * n
        states = tuple(
            LiftedState(np.frombuffer(fh.read(8 * dim), dtype="<f8"))
            for _ in range(n_frames)
        )
        rest = None
        if flags & _FLAG_REST:
            rest = np.frombuffer(fh.read(24 * n), dtype="<f8").reshape(n, 3)
        force_lifts = ()
        if flags & _FLAG_FORCES:
            force_lifts = tuple(
                ForceLift(np.frombuffer(fh.read(8 * dim), dtype="<f8"), h)
                for _ in range(n_frames - 1)
            )
    return SnapshotSet(states=states, h=h, rest_positions=rest,
                       force_lifts=force_lifts)


# -- model files --------------------------------------------------------------

def write_model(path, model: KoopmanModel) -> None:
    if model.dim % 6 != 0:
        raise DimensionError("only full lifted-state models can be serialized")
    n, r = model.dim // 6, model.rank
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, n, r))
        fh.write(struct.pack("<d", model.h))
        for block in (np.real(model.modes), np.imag(model.modes),
                      np.real(model.eigenvalues), np.imag(model.eigenvalues),
                      model.left_basis,
                      np.real(model.reduced_eigvecs), np.imag(model.reduced_eigvecs)):
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def read_model(path) -> KoopmanModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise DomainError(f"not a model file (magic {magic!r})")
        version, n, r = struct.unpack("<III", fh.read(12))
        if version != FORMAT_VERSION:
            raise DomainError(f"unsupported model version {version}")
        (h,) = struct.unpack("<d", fh.read(8))
        dim = 6 * n

        def block(*shape):
            count = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)

        def complex_block(*shape):
            # assemble via .real/.imag to keep signed zeros bit-exact
            out = np.empty(shape, dtype=np.complex128)
            out.real = block(*shape)
            out.imag = block(*shape)
            return out

        modes = complex_block(dim, r)
        eigvals = complex_block(r)
        left = block(dim, r)
        eigvecs = complex_block(r, r)
    return KoopmanModel(modes=modes, eigenvalues=eigvals, h=h,
                        left_basis=left, reduced_eigvecs=eigvecs, n_vertices=n)


# -- error metric -------------------------------------------------------------

def percentage_mse(pred, ref, rest, skip_tiny: float = 1e-12):
    """Frame-wise percentage MSE, the single metric used by every comparison:
    100 * ||pred - ref||^2 / ||ref - rest||^2.

    ``pred``/``ref`` are sequences of LiftedState or arrays; ``rest`` is the
    lifted rest state.  Frames whose deformation magnitude relative to rest
    falls below ``skip_tiny`` are reported as NaN and excluded from the mean.
    """
    rest_vec = rest.values if isinstance(rest, LiftedState) else np.asarray(rest)

    def vec(s):
        return s.values if isinstance(s, LiftedState) else np.asarray(s)

    out = []
    for p, q in zip(pred, ref, strict=True):
        denom = float(np.sum((vec(q) - rest_vec) ** 2))
        if denom < skip_tiny:
            out.append(np.nan)
        else:
            out.append(100.0 * float(np.sum((vec(p) - vec(q)) ** 2)) / denom)
    return np.asarray(out)


def mean_percentage_mse(pred, ref, rest) -> float:
    frames = percentage_mse(pred, ref, rest)
    valid = frames[~np.isnan(frames)]
    if valid.size == 0:
        return 0.0
    return float(valid.mean())


# -- CSV ----------------------------------------------------------------------

def write_ke_csv(path, times, energies) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,time,ke\n")
        for i, (t, e) in enumerate(zip(times, energies)):
            fh.write(f"{i},{t!r},{e!r}\n")


def read_ke_csv(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows[:, 1], rows[:, 2]
