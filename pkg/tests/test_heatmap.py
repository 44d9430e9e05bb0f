import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sparsegrid.heatmap import ramp_color, render_svg

NS = "{http://www.w3.org/2000/svg}"


def test_ramp_endpoints_and_clamp():
    assert ramp_color(0.3) == "#800026"
    assert ramp_color(1.0) == "#ffffcc"
    assert ramp_color(0.0) == ramp_color(0.3)
    assert ramp_color(1.5) == ramp_color(1.0)


def test_ramp_is_linear():
    mid = ramp_color(0.65)
    r, g, b = (int(mid[i:i + 2], 16) for i in (1, 3, 5))
    assert (r, g, b) == (round(128 + 0.5 * 127), round(0.5 * 255), round(38 + 0.5 * 166))


def test_svg_cells():
    mat = np.full((5, 9), np.nan)
    for i in range(5):
        mat[i, : 2 * i + 1] = 0.9 - 0.1 * i
    svg = render_svg(mat, (10, 20, 30, 40, 50), range(5, 50, 5), "FLI <test>")
    root = ET.fromstring(svg)
    labels = [t.text for t in root.iter(NS + "text")]
    assert "FLI <test>" in labels
    assert sum(1 for t in labels if t and len(t) == 5 and t.startswith("0.")) == 25
    fills = [r.get("fill") for r in root.iter(NS + "rect")]
    assert fills.count("#f0f0f0") == 45 - 25


def test_svg_label_mismatch():
    with pytest.raises(ValueError):
        render_svg(np.zeros((2, 2)), (1,), (1, 2))
