"""SVG drawing of planar circle packings."""

import numpy as np

STROKE = 0.002


def circles_from_vectors(vectors):
    """(cx, cy, r, bend) for each inversive vector with nonzero bend."""
    out = []
    for v in np.asarray(vectors, dtype=float):
        b = v[0]
        if b == 0:
            continue
        out.append((v[1] / b + 0.0, v[2] / b + 0.0, 1 / abs(b), b))
    return out


def render_svg(vectors, size=800):
    """SVG text for the circles of a packing in the plane (n = 2).

    The view box is fitted to the outer circle (negative bend) when there is
    one, else to the bounding box of all circles.
    """
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.shape[1] != 4:
        raise ValueError("rendering needs n = 2 inversive vectors (length 4)")
    circles = circles_from_vectors(vectors)
    if not circles:
        raise ValueError("nothing to draw")
    outer = [c for c in circles if c[3] < 0]
    if outer:
        cx, cy, r, _ = max(outer, key=lambda c: c[2])
        x0, y0, x1, y1 = cx - r, cy - r, cx + r, cy + r
    else:
        x0 = min(c[0] - c[2] for c in circles)
        x1 = max(c[0] + c[2] for c in circles)
        y0 = min(c[1] - c[2] for c in circles)
        y1 = max(c[1] + c[2] for c in circles)
    span = max(x1 - x0, y1 - y0)
    pad = 0.02 * span
    stroke = STROKE * span
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{x0 - pad:.9g} {y0 - pad:.9g} {span + 2 * pad:.9g} {span + 2 * pad:.9g}">',
        # flip y so the picture has the usual orientation
        f'<g transform="translate(0 {y0 + y1:.9g}) scale(1 -1)" fill="none" stroke="black" '
        f'stroke-width="{stroke:.6g}">',
    ]
    for cx, cy, r, b in sorted(circles, key=lambda c: (c[3], c[0], c[1])):
        lines.append(f'<circle cx="{cx:.9g}" cy="{cy:.9g}" r="{r:.9g}"/>')
    lines += ["</g>", "</svg>", ""]
    return "\n".join(lines)
