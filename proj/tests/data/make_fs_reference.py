"""Writes fs_reference.txt: Floyd-Steinberg traces used by the C++ tests.

Each case is three lines:
    case <name> <height> <width>
    <input values as hex floats, space separated>
    <output bits, one character per pixel>
"""
import random
import sys


def dither(values, h, w):
    buf = list(values)
    out = [0] * (h * w)
    for y in range(h):
        for x in range(w):
            i = y * w + x
            old = buf[i]
            new = 1.0 if old >= 0.5 else 0.0
            out[i] = int(new)
            e = old - new
            if x + 1 < w:
                buf[i + 1] += e * 7.0 / 16.0
            if y + 1 < h:
                if x > 0:
                    buf[i + w - 1] += e * 3.0 / 16.0
                buf[i + w] += e * 5.0 / 16.0
                if x + 1 < w:
                    buf[i + w + 1] += e * 1.0 / 16.0
    return out


def cases():
    h = w = 28
    for v in (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
        yield f"constant_{v}", h, w, [v] * (h * w)
    yield "ramp", h, w, [x / (w - 1) for y in range(h) for x in range(w)]
    yield "radial", h, w, [min(1.0, ((x - 13.5) ** 2 + (y - 13.5) ** 2) / 200.0) for y in range(h) for x in range(w)]
    rng = random.Random(20240101)
    for k in range(4):
        yield f"uniform_{k}", h, w, [rng.random() for _ in range(h * w)]
    yield "small_5x3", 5, 3, [rng.random() for _ in range(15)]


def main(path):
    with open(path, "w") as f:
        for name, h, w, values in cases():
            f.write(f"case {name} {h} {w}\n")
            f.write(" ".join(float(v).hex() for v in values) + "\n")
            f.write("".join(str(b) for b in dither(values, h, w)) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fs_reference.txt")
