"""Plain-text array checkpoint format.

Layout (line oriented, utf-8):

    biofuse-params 1
    count <n_arrays>
    param <name>
    shape <d0> <d1> ...
    data <v> <v> ...          (row-major, wrapped; %.17g round-trips float64)

Every float is written with 17 significant digits, so save followed by
load reproduces each array bit-for-bit.
"""

import numpy as np

from ..errors import FormatError

MAGIC = "biofuse-params"
VERSION = 1
_PER_LINE = 16


def save_arrays(path, arrays):
    """Write an ordered name -> ndarray mapping to ``path``."""
    names = list(arrays)
    if len(set(names)) != len(names):
        raise FormatError("duplicate array names in checkpoint")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} {VERSION}\n")
        fh.write(f"count {len(names)}\n")
        for name in names:
            if not name or any(c.isspace() for c in name):
                raise FormatError(f"array name {name!r} must be non-empty without spaces")
            arr = np.asarray(arrays[name], dtype=np.float64)
            fh.write(f"param {name}\n")
            fh.write("shape" + "".join(f" {d}" for d in arr.shape) + "\n")
            flat = arr.reshape(-1)
            for start in range(0, flat.size, _PER_LINE):
                chunk = flat[start : start + _PER_LINE]
                fh.write("data " + " ".join(format(v, ".17g") for v in chunk) + "\n")
            if flat.size == 0:
                fh.write("data\n")


def load_arrays(path):
    """Read a checkpoint back into a name -> float64 ndarray dict."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def fail(lineno, msg):
        raise FormatError(f"{path}:{lineno + 1}: {msg}")

    if not lines:
        fail(0, "empty checkpoint file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        fail(0, f"bad magic, expected '{MAGIC} <version>'")
    if head[1] != str(VERSION):
        fail(0, f"unsupported version {head[1]}")
    if len(lines) < 2 or not lines[1].startswith("count "):
        fail(1, "missing count line")
    try:
        count = int(lines[1].split()[1])
    except (IndexError, ValueError):
        fail(1, "unreadable count")

    out = {}
    i = 2
    for _ in range(count):
        if i >= len(lines) or not lines[i].startswith("param "):
            fail(min(i, len(lines) - 1), "expected 'param <name>'")
        name = lines[i].split(None, 1)[1].strip()
        if name in out:
            fail(i, f"duplicate array {name!r}")
        i += 1
        if i >= len(lines) or not lines[i].startswith("shape"):
            fail(min(i, len(lines) - 1), "expected shape line")
        try:
            shape = tuple(int(tok) for tok in lines[i].split()[1:])
        except ValueError:
            fail(i, "unreadable shape")
        i += 1
        need = int(np.prod(shape)) if shape else 1
        values = []
        while len(values) < need:
            if i >= len(lines) or not lines[i].startswith("data"):
                fail(min(i, len(lines) - 1), f"array {name!r} truncated")
            toks = lines[i].split()[1:]
            try:
                values.extend(float(t) for t in toks)
            except ValueError:
                fail(i, "unreadable float")
            i += 1
        if need == 0 and i < len(lines) and lines[i].startswith("data"):
            i += 1  # the single empty data line of a zero-size array
        if len(values) != need:
            fail(i - 1, f"array {name!r} has {len(values)} values, expected {need}")
        out[name] = np.array(values, dtype=np.float64).reshape(shape)
    if i != len(lines):
        fail(i, "trailing content after last array")
    return out
