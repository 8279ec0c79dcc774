"""PLY (ascii / binary little-endian) and XYZ-ASCII reading and writing."""
from pathlib import Path

import numpy as np

from .core import GtLabel, PointCloud, PredLabel
from .exceptions import CloudParseError

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

# (property name, ply type) in write order; colour and corrected intensity optional
_CORE_PROPS = [("x", "double"), ("y", "double"), ("z", "double")]
_COLOR_PROPS = [("red", "uchar"), ("green", "uchar"), ("blue", "uchar")]
_TAIL_PROPS = [
    ("intensity", "float"),
    ("echo_index", "uchar"),
    ("echo_count", "uchar"),
    ("gt_label", "uchar"),
    ("pred_label", "uchar"),
]

_GT_VALUES = {int(v) for v in GtLabel}
_PRED_VALUES = {int(v) for v in PredLabel}


def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower().replace("-", "").replace("_", "")
        if fmt in ("ply",):
            return "ply"
        if fmt in ("xyz", "xyzascii", "ascii", "txt"):
            return "xyz"
        raise ValueError(f"unknown format {fmt!r}")
    suffix = Path(path).suffix.lower()
    return "ply" if suffix == ".ply" else "xyz"


def load_cloud(path, format=None):
    """Read a cloud from ``path``; format defaults from the file suffix."""
    if _infer_format(path, format) == "ply":
        return _load_ply(path)
    return _load_xyz(path)


def save_cloud(cloud, path, format=None, binary=True):
    """Write ``cloud``. PLY is binary little-endian unless ``binary=False``."""
    path = Path(path)
    if _infer_format(path, format) == "ply":
        _save_ply(cloud, path, binary)
    else:
        _save_xyz(cloud, path)


# ---------------------------------------------------------------------------
# PLY


def _ply_props(cloud):
    props = list(_CORE_PROPS)
    if cloud.colors is not None:
        props += _COLOR_PROPS
    props += _TAIL_PROPS[:1]
    if cloud.intensity_corrected is not None:
        props.append(("intensity_corrected", "float"))
    props += _TAIL_PROPS[1:]
    return props


def _ply_table(cloud):
    props = _ply_props(cloud)
    dtype = np.dtype([(name, "<" + PLY_TYPES[t]) for name, t in props])
    table = np.empty(len(cloud), dtype=dtype)
    table["x"], table["y"], table["z"] = cloud.positions.T
    if cloud.colors is not None:
        table["red"], table["green"], table["blue"] = cloud.colors.T
    table["intensity"] = cloud.intensity
    if cloud.intensity_corrected is not None:
        table["intensity_corrected"] = cloud.intensity_corrected
    for name in ("echo_index", "echo_count", "gt_label", "pred_label"):
        table[name] = getattr(cloud, name)
    return props, table


def _fmt(value):
    return "%.17g" % value


def _save_ply(cloud, path, binary):
    props, table = _ply_table(cloud)
    fmt = "binary_little_endian" if binary else "ascii"
    origin = " ".join(_fmt(v) for v in cloud.scanner_origin)
    header = ["ply", f"format {fmt} 1.0", f"comment scanner_origin {origin}",
              f"element vertex {len(cloud)}"]
    header += [f"property {t} {name}" for name, t in props]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(table.tobytes())
        else:
            lines = [" ".join(_fmt(v) if isinstance(v, float) else str(v) for v in row)
                     for row in table.tolist()]
            f.write(("\n".join(lines) + ("\n" if lines else "")).encode("ascii"))


def _parse_header(f, path):
    first = f.readline()
    if first.strip() != b"ply":
        raise CloudParseError(f"{path}: line 1: missing 'ply' magic")
    fmt = None
    origin = np.zeros(3)
    elements = []  # [name, count, [(prop, dtype)]]
    line_no = 1
    while True:
        raw = f.readline()
        line_no += 1
        if not raw:
            raise CloudParseError(f"{path}: header not terminated by end_header")
        words = raw.decode("ascii", errors="replace").split()
        if not words:
            continue
        key = words[0]
        try:
            if key == "format":
                fmt = words[1]
                if fmt not in ("ascii", "binary_little_endian"):
                    raise CloudParseError(f"{path}: line {line_no}: unsupported format {fmt}")
            elif key == "comment":
                if len(words) >= 2 and words[1] == "scanner_origin":
                    origin = np.array([float(w) for w in words[2:5]])
                    if origin.shape != (3,):
                        raise ValueError
            elif key == "element":
                elements.append([words[1], int(words[2]), []])
            elif key == "property":
                if not elements:
                    raise ValueError
                if words[1] == "list":
                    raise CloudParseError(f"{path}: line {line_no}: list properties are not supported")
                elements[-1][2].append((words[2], "<" + PLY_TYPES[words[1]]))
            elif key == "end_header":
                break
            elif key == "obj_info":
                pass
            else:
                raise ValueError
        except CloudParseError:
            raise
        except (ValueError, IndexError, KeyError):
            raise CloudParseError(f"{path}: line {line_no}: malformed header line {raw!r}") from None
    if fmt is None:
        raise CloudParseError(f"{path}: header has no format line")
    return fmt, origin, elements, line_no


def _load_ply(path):
    with open(path, "rb") as f:
        fmt, origin, elements, header_lines = _parse_header(f, path)
        body = f.read()
    vertex = None
    offset = 0
    line_offset = header_lines
    text_lines = body.decode("ascii", errors="replace").splitlines() if fmt == "ascii" else None
    for name, count, props in elements:
        dtype = np.dtype(props)
        if name == "vertex":
            if fmt == "ascii":
                vertex = _ascii_table(text_lines[offset:offset + count], count, dtype, path,
                                      line_offset)
            else:
                need = dtype.itemsize * count
                if len(body) - offset < need:
                    raise CloudParseError(f"{path}: binary vertex data truncated "
                                          f"(expected {count} records)")
                vertex = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
            break
        if fmt == "ascii":
            offset += count
            line_offset += count
        else:
            offset += dtype.itemsize * count
    if vertex is None:
        raise CloudParseError(f"{path}: no vertex element")
    names = vertex.dtype.names
    for req in ("x", "y", "z"):
        if req not in names:
            raise CloudParseError(f"{path}: vertex element lacks property {req}")

    def col(name, dtype):
        return vertex[name].astype(dtype) if name in names else None

    positions = np.column_stack([vertex["x"], vertex["y"], vertex["z"]]).astype(np.float64)
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.column_stack([vertex["red"], vertex["green"], vertex["blue"]]).astype(np.uint8)
    cols = dict(
        intensity=col("intensity", np.float32),
        intensity_corrected=col("intensity_corrected", np.float32),
        echo_index=col("echo_index", np.uint8),
        echo_count=col("echo_count", np.uint8),
        gt_label=col("gt_label", np.uint8),
        pred_label=col("pred_label", np.uint8),
    )
    first_line = header_lines + 1 if fmt == "ascii" else None
    _check_records(path, positions, cols, first_line)
    return PointCloud(positions=positions, scanner_origin=origin, colors=colors, **cols)


def _ascii_table(lines, count, dtype, path, line_offset):
    if len(lines) < count:
        raise CloudParseError(f"{path}: vertex data truncated ({len(lines)} of {count} records)")
    table = np.empty(count, dtype=dtype)
    nprop = len(dtype.names)
    for i, line in enumerate(lines):
        words = line.split()
        if len(words) != nprop:
            raise CloudParseError(f"{path}: line {line_offset + i + 1}: expected {nprop} values, "
                                  f"got {len(words)}")
        try:
            table[i] = tuple(float(w) if dtype[k].kind == "f" else int(float(w))
                             for k, w in enumerate(words))
        except (ValueError, OverflowError):
            raise CloudParseError(f"{path}: line {line_offset + i + 1}: bad value in {line!r}") from None
    return table


def _where(path, i, first_line):
    if first_line is None:
        return f"{path}: vertex record {i}"
    return f"{path}: line {first_line + i} (vertex record {i})"


def _check_records(path, positions, cols, first_line):
    bad = ~np.isfinite(positions).all(axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise CloudParseError(f"{_where(path, i, first_line)}: non-finite coordinate")
    ei, ec = cols["echo_index"], cols["echo_count"]
    if ei is not None or ec is not None:
        ei = np.ones(len(positions), np.uint8) if ei is None else ei
        ec = np.ones(len(positions), np.uint8) if ec is None else ec
        bad = (ei < 1) | (ei > ec)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise CloudParseError(f"{_where(path, i, first_line)}: echo_index {ei[i]} "
                                  f"exceeds echo_count {ec[i]}")
    if cols["intensity"] is not None:
        bad = ~(cols["intensity"] >= 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise CloudParseError(f"{_where(path, i, first_line)}: negative intensity")
    for name, allowed in (("gt_label", _GT_VALUES), ("pred_label", _PRED_VALUES)):
        v = cols[name]
        if v is not None:
            bad = ~np.isin(v, list(allowed))
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise CloudParseError(f"{_where(path, i, first_line)}: invalid {name} {v[i]}")


# ---------------------------------------------------------------------------
# XYZ


def _save_xyz(cloud, path):
    with open(path, "w") as f:
        f.write("# scanner_origin " + " ".join(_fmt(v) for v in cloud.scanner_origin) + "\n")
        for (x, y, z), i in zip(cloud.positions.tolist(), cloud.intensity.tolist()):
            f.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)} {_fmt(i)}\n")


def _load_xyz(path):
    origin = np.zeros(3)
    rows = []
    has_intensity = None
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                words = s[1:].split()
                if words and words[0] == "scanner_origin":
                    try:
                        origin = np.array([float(w) for w in words[1:4]])
                        assert origin.shape == (3,)
                    except (ValueError, AssertionError):
                        raise CloudParseError(f"{path}: line {line_no}: bad scanner_origin") from None
                continue
            words = s.split()
            if len(words) not in (3, 4):
                raise CloudParseError(f"{path}: line {line_no}: expected 'x y z [intensity]'")
            if has_intensity is None:
                has_intensity = len(words) == 4
            elif has_intensity != (len(words) == 4):
                raise CloudParseError(f"{path}: line {line_no}: inconsistent column count")
            try:
                vals = [float(w) for w in words]
            except ValueError:
                raise CloudParseError(f"{path}: line {line_no}: bad number in {s!r}") from None
            if not all(np.isfinite(vals[:3])):
                raise CloudParseError(f"{path}: line {line_no}: non-finite coordinate")
            if has_intensity and not vals[3] >= 0:
                raise CloudParseError(f"{path}: line {line_no}: negative intensity")
            rows.append(vals)
    data = np.array(rows, dtype=np.float64).reshape(-1, 4 if has_intensity else 3)
    intensity = data[:, 3].astype(np.float32) if has_intensity else None
    return PointCloud(positions=data[:, :3], scanner_origin=origin, intensity=intensity)
