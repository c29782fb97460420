"""Image ingestion, geometry, augmentation, noise, and the conv feature extractor.

Pixels are float64 grayscale in [0, 1] everywhere past the loaders. Color
inputs are collapsed with the 0.299/0.587/0.114 luma weights at load time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .numcore import Conv2d, Dense, GlobalAvgPool2d, Relu

LUMA = (0.299, 0.587, 0.114)


@dataclass
class Image:
    """Grayscale image: 2-D float64 pixels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or 0 in self.pixels.shape:
            raise DimensionError(f"pixels must be 2-D and non-empty, got {self.pixels.shape}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ParameterError(
                f"pixels must lie in [0, 1], got [{self.pixels.min()}, {self.pixels.max()}]"
            )

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class FeatureVector:
    """A per-modality feature vector, tagged with where it came from."""

    modality: str
    values: np.ndarray


# ---------------------------------------------------------------- ingestion

class _PnmScanner:
    """Tokenizer over PNM header/ASCII data that remembers byte offsets."""

    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.pos = 0

    def fail(self, msg, at=None):
        raise FormatError(f"{self.path}: byte {self.pos if at is None else at}: {msg}")

    def next_token(self):
        d = self.data
        n = len(d)
        while self.pos < n:
            c = d[self.pos : self.pos + 1]
            if c == b"#":
                while self.pos < n and d[self.pos : self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            elif c.isspace():
                self.pos += 1
            else:
                break
        if self.pos >= n:
            self.fail("unexpected end of file")
        start = self.pos
        while self.pos < n and not d[self.pos : self.pos + 1].isspace():
            if d[self.pos : self.pos + 1] == b"#":
                break
            self.pos += 1
        return d[start : self.pos], start

    def next_int(self, what):
        tok, start = self.next_token()
        try:
            v = int(tok)
        except ValueError:
            self.fail(f"{what} is not an integer: {tok!r}", at=start)
        return v, start


def _read_pnm(data, path):
    sc = _PnmScanner(data, path)
    magic, at = sc.next_token()
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        sc.fail(f"unsupported PNM magic {magic!r} (need P2/P3/P5/P6)", at=at)
    width, at = sc.next_int("width")
    height, _ = sc.next_int("height")
    maxval, at_max = sc.next_int("maxval")
    if width < 1 or height < 1:
        sc.fail(f"bad dimensions {width}x{height}", at=at)
    if not 1 <= maxval <= 65535:
        sc.fail(f"maxval {maxval} outside [1, 65535]", at=at_max)
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = width * height * channels

    if magic in (b"P2", b"P3"):
        values = np.empty(count, dtype=np.float64)
        for i in range(count):
            v, at = sc.next_int("pixel")
            if not 0 <= v <= maxval:
                sc.fail(f"pixel value {v} outside [0, {maxval}]", at=at)
            values[i] = v
    else:
        # single whitespace byte separates maxval from raw data
        sc.pos += 1
        wide = maxval > 255
        need = count * (2 if wide else 1)
        raw = data[sc.pos : sc.pos + need]
        if len(raw) < need:
            sc.fail(f"raw data truncated: need {need} bytes, have {len(raw)}")
        arr = np.frombuffer(raw, dtype=">u2" if wide else np.uint8)
        values = arr.astype(np.float64)
        if (values > maxval).any():
            bad = int(np.argmax(values > maxval))
            sc.fail(f"pixel value {int(values[bad])} outside [0, {maxval}]",
                    at=sc.pos + bad * (2 if wide else 1))

    values /= maxval
    if channels == 3:
        rgb = values.reshape(height, width, 3)
        gray = LUMA[0] * rgb[..., 0] + LUMA[1] * rgb[..., 1] + LUMA[2] * rgb[..., 2]
    else:
        gray = values.reshape(height, width)
    return Image(np.clip(gray, 0.0, 1.0))


def _read_csv_image(data, path):
    rows = []
    offset = 0
    width = None
    for lineno, raw in enumerate(data.splitlines(keepends=True), start=1):
        line = raw.decode("utf-8", errors="replace").strip()
        if line and not line.startswith("#"):
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise FormatError(
                    f"{path}:{lineno} (byte {offset}): row has {len(fields)} values, expected {width}"
                )
            row = []
            for f in fields:
                try:
                    v = float(f)
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno} (byte {offset}): not a number: {f!r}"
                    ) from None
                if not 0.0 <= v <= 1.0:
                    raise FormatError(
                        f"{path}:{lineno} (byte {offset}): pixel {v} outside [0, 1]"
                    )
                row.append(v)
            rows.append(row)
        offset += len(raw)
    if not rows:
        raise FormatError(f"{path}: no pixel rows")
    return Image(np.asarray(rows, dtype=np.float64))


def load_image(path):
    """Read a PGM (P2/P5), PPM (P3/P6), or CSV image into [0, 1] grayscale."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if path.lower().endswith((".pgm", ".ppm", ".pnm")):
        return _read_pnm(data, path)
    if path.lower().endswith(".csv"):
        return _read_csv_image(data, path)
    # extension unknown: sniff the PNM magic, else treat as CSV
    if data[:2] in (b"P2", b"P3", b"P5", b"P6"):
        return _read_pnm(data, path)
    return _read_csv_image(data, path)


def write_pgm(path, image, maxval=255):
    """Write grayscale pixels as binary PGM (P5)."""
    q = np.rint(np.clip(image.pixels, 0.0, 1.0) * maxval)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        if maxval > 255:
            fh.write(q.astype(">u2").tobytes())
        else:
            fh.write(q.astype(np.uint8).tobytes())


# ----------------------------------------------------------------- geometry

def resize_bilinear(pixels, out_h, out_w):
    """Bilinear resize with pixel centers aligned across scales.

    Source coordinate of output pixel i is (i + 0.5) * in/out - 0.5, so the
    same size is an exact identity and 2x2 -> 1x1 averages all four pixels.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise DimensionError(f"expected 2-D pixels, got {pixels.shape}")
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"target size {out_h}x{out_w} must be positive")
    in_h, in_w = pixels.shape
    if (out_h, out_w) == (in_h, in_w):
        return pixels.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5, 0.0, in_h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    tl = pixels[np.ix_(y0, x0)]
    tr = pixels[np.ix_(y0, x1)]
    bl = pixels[np.ix_(y1, x0)]
    br = pixels[np.ix_(y1, x1)]
    top = tl + (tr - tl) * wx
    bot = bl + (br - bl) * wx
    return top + (bot - top) * wy


def standardize(image, size):
    """Resize to a square ``size`` x ``size`` model input."""
    return Image(np.clip(resize_bilinear(image.pixels, size, size), 0.0, 1.0))


def _nearest_sample(pixels, src_y, src_x):
    """Nearest-neighbor lookup at float coordinates; outside the frame is zero."""
    h, w = pixels.shape
    inside = (src_y >= 0) & (src_y <= h - 1) & (src_x >= 0) & (src_x <= w - 1)
    ys = np.clip(np.rint(src_y), 0, h - 1).astype(int)
    xs = np.clip(np.rint(src_x), 0, w - 1).astype(int)
    out = pixels[ys, xs]
    out[~inside] = 0.0
    return out


@dataclass
class AugmentConfig:
    """Ranges for the random augmentation draw."""

    max_rotation_deg: float = 10.0
    max_translate: float = 0.08  # fraction of each side
    crop_area: tuple = (0.8, 1.0)

    def validate(self):
        if self.max_rotation_deg < 0 or self.max_translate < 0:
            raise ParameterError("augmentation ranges must be non-negative")
        lo, hi = self.crop_area
        if not 0.0 < lo <= hi <= 1.0:
            raise ParameterError(f"crop_area {self.crop_area} must satisfy 0 < lo <= hi <= 1")


def augment(image, rng, config=None):
    """One random rotation + translation + area crop, zero-filled, seeded.

    The crop is zoomed back to the input size, so augmented images keep
    their original shape. All three moves are composed into one inverse
    map sampled nearest-neighbor: pixel values are relocated, never
    blended, so images built from a few tonal levels keep exactly those
    levels.
    """
    cfg = config or AugmentConfig()
    cfg.validate()
    h, w = image.pixels.shape

    angle = np.deg2rad(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg))
    ty = rng.uniform(-cfg.max_translate, cfg.max_translate) * h
    tx = rng.uniform(-cfg.max_translate, cfg.max_translate) * w
    area = rng.uniform(cfg.crop_area[0], cfg.crop_area[1])
    side = np.sqrt(area)
    ch = max(1, int(round(side * h)))
    cw = max(1, int(round(side * w)))
    top = rng.integers(0, h - ch + 1)
    left = rng.integers(0, w - cw + 1)

    # output pixel -> crop-window coordinate (center-aligned zoom) ...
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    mid_y = (ii + 0.5) * (ch / h) - 0.5 + top
    mid_x = (jj + 0.5) * (cw / w) - 0.5 + left
    # ... -> source coordinate: undo translation, rotate backwards about center
    c, s = np.cos(angle), np.sin(angle)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    matrix = np.array([[c, -s], [s, c]])
    base = np.array([cy - ty, cx - tx]) - matrix @ np.array([cy, cx])
    src_y = matrix[0, 0] * mid_y + matrix[0, 1] * mid_x + base[0]
    src_x = matrix[1, 0] * mid_y + matrix[1, 1] * mid_x + base[1]
    return Image(_nearest_sample(image.pixels, src_y, src_x))


def pepper_noise(image, fraction, rng):
    """Black out exactly floor(fraction * n_pixels) distinct pixels."""
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction must lie in [0, 1], got {fraction}")
    pixels = image.pixels.copy()
    n = pixels.size
    count = int(np.floor(fraction * n))
    if count:
        idx = rng.choice(n, size=count, replace=False)
        pixels.reshape(-1)[idx] = 0.0
    return Image(pixels)


# ---------------------------------------------------------------- extractor

class ConvStack:
    """Stride-2 conv/ReLU blocks, average-pooled after every block.

    Input [batch, h, w] in [0, 1]; output [batch, sum(widths)]: the pooled
    maps of all blocks concatenated, shallowest first. Keeping the shallow
    pools in the embedding matters — they carry plain intensity statistics
    that deeper, repeatedly averaged blocks wash out.

    The first block is a 1x1 conv at full resolution: a bank of per-pixel
    tonal thresholds. Spatial structure enters from block two on, at the
    given kernel size and stride 2. Reading values pointwise before any
    spatial mixing keeps intensity statistics clean — with a wide strided
    kernel the response to an isolated bright pixel depends on where it
    lands relative to the stride grid, which turns those statistics into
    noise.
    """

    def __init__(self, rng, widths=(8, 16, 32), kernel=3, name="conv"):
        if not widths:
            raise ParameterError("need at least one conv block")
        self.widths = tuple(widths)
        self.convs = []
        self.relus = []
        self.pools = []
        c_in = 1
        for i, c_out in enumerate(self.widths):
            k, stride = (1, 1) if i == 0 else (kernel, 2)
            conv = Conv2d(c_in, c_out, k, stride, rng, name=f"{name}{i}")
            if i == 0:
                # the bank starts as an ascending ladder of tonal
                # thresholds: pooled ReLU(g*(v - t)) responses estimate the
                # distribution of pixel values, and zeros from dropout or
                # frame fill sit below every threshold and vanish. Training
                # refines the spacing from there.
                gain = np.sqrt(2.0)
                steps = (np.arange(c_out) + 0.5) / c_out
                conv.weights.value[...] = gain
                conv.bias.value[...] = -gain * steps
            self.convs.append(conv)
            self.relus.append(Relu())
            self.pools.append(GlobalAvgPool2d())
            c_in = c_out

    @property
    def out_dim(self):
        return sum(self.widths)

    def forward(self, images):
        x = np.asarray(images, dtype=np.float64)
        if x.ndim != 3:
            raise DimensionError(f"expected [batch, h, w], got {x.shape}")
        x = x[:, None, :, :]
        pooled = []
        for conv, relu, pool in zip(self.convs, self.relus, self.pools):
            x = relu.forward(conv.forward(x))
            pooled.append(pool.forward(x))
        return np.concatenate(pooled, axis=1)

    def backward(self, grad):
        parts = np.split(np.asarray(grad), np.cumsum(self.widths)[:-1], axis=1)
        g_deeper = None
        for i in reversed(range(len(self.widths))):
            g = self.pools[i].backward(parts[i])
            if g_deeper is not None:
                g = g + g_deeper
            g_deeper = self.convs[i].backward(self.relus[i].backward(g))
        return g_deeper[:, 0, :, :]

    def params(self):
        out = []
        for conv in self.convs:
            out.extend(conv.params())
        return out


def extract_features(stack, image):
    """Run one image through the extractor; returns the raw embedding."""
    return stack.forward(image.pixels[None, :, :])[0]


def project(projector, embedding, modality):
    """Map a raw embedding to the common fused dimension via a Dense layer."""
    if not isinstance(projector, Dense):
        raise ParameterError("projector must be a Dense layer")
    values = projector.forward(np.asarray(embedding, dtype=np.float64)[None, :])[0]
    return FeatureVector(modality=modality, values=values)
