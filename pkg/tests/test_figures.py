import math

import numpy as np
import pytest

from collarcap import figures as fg


def test_colorize_anchors():
    rgb = fg.colorize(np.array([-2.0, -1.0, 0.0, 1.0, 3.0, np.nan]), 1.0)
    assert rgb[1].tolist() == [59, 76, 192]
    assert rgb[2].tolist() == [221, 221, 221]
    assert rgb[3].tolist() == [180, 4, 38]
    assert rgb[0].tolist() == rgb[1].tolist() and rgb[4].tolist() == rgb[3].tolist()
    assert rgb[5].tolist() == [0, 0, 0]


def test_ppm_header_and_size():
    img = np.zeros((3, 5), dtype=np.uint8)
    data = fg.ppm_bytes(img)
    assert data.startswith(b"P6\n5 3\n255\n")
    assert len(data) == len(b"P6\n5 3\n255\n") + 3 * 5 * 3


def test_csv_float_format():
    text = fg.csv_text(["a", "b"], [(0.1, np.int64(3)), (1.0 / 3.0, "x")])
    lines = text.splitlines()
    assert lines[0] == "a,b"
    assert float(lines[1].split(",")[0]) == 0.1
    assert float(lines[2].split(",")[0]) == 1.0 / 3.0
    assert lines[1].split(",")[1] == "3"


def test_mask_values_and_determinism(sphere):
    m1 = fg.island_mask(sphere, 128)
    m2 = fg.island_mask(sphere, 128)
    assert np.array_equal(m1, m2)
    assert set(np.unique(m1)) <= {fg.STOCHASTIC_GREY, fg.CAP_WHITE}


def test_mask_fraction_matches_area(sphere):
    m = fg.island_mask(sphere, 512)
    # each of the four drawn caps has area C; pixel error is one boundary ring
    expect = 1.0 - 4 * sphere.cap.area
    assert abs(fg.mask_stochastic_fraction(m) - expect) < 2e-3


def test_picture_round_trip(sphere):
    X, Y = fg.pixel_centers(64)
    b = fg.picture_points(sphere, 0, X, Y)
    px, py = fg.picture_position(sphere, b)
    X, Y = X.ravel(), Y.ravel()
    # positions are defined modulo the quotient symmetry
    d1 = np.hypot((px - X + 0.5) % 1 - 0.5, (py - Y + 0.5) % 1 - 0.5)
    d2 = np.hypot((px + X + 0.5) % 1 - 0.5, (py + Y + 0.5) % 1 - 0.5)
    assert np.max(np.minimum(d1, d2)) < 1e-9


def test_cap_interior_round_trip(sphere):
    C = fg.cap_area(sphere)
    r = math.sqrt(2 * C / math.pi)
    ang = np.linspace(0, 2 * math.pi, 50, endpoint=False)
    X = 0.5 + 0.5 * r * np.cos(ang)
    Y = 0.5 + 0.5 * r * np.sin(ang)
    b = fg.picture_points(sphere, 0, X, Y)
    assert np.all(b.kind != 0)
    px, py = fg.picture_position(sphere, b)
    d1 = np.hypot((px - X + 0.5) % 1 - 0.5, (py - Y + 0.5) % 1 - 0.5)
    d2 = np.hypot((px + X + 0.5) % 1 - 0.5, (py + Y + 0.5) % 1 - 0.5)
    assert np.max(np.minimum(d1, d2)) < 1e-9


def test_portrait_svg_is_xml(sphere, tmp_path):
    import xml.etree.ElementTree as ET
    chaotic = (np.array([0.1, 0.2]), np.array([0.3, 0.4]))
    svg = fg.portrait_svg(sphere, chaotic, [])
    ET.fromstring(svg)
