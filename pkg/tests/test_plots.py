import re

from defect_schwarz.plots import HEIGHT, MARGIN, WIDTH, line_chart


def coords(svg):
    m = re.search(r'<polyline[^>]*points="([^"]+)"', svg)
    return [tuple(map(float, p.split(","))) for p in m.group(1).split()]


def test_single_point_marker(tmp_path):
    svg = line_chart({"oo": [(0.1, 20.0)]}, tmp_path / "one.svg").read_text()
    assert svg.count('class="marker"') == 1 and "polyline" not in svg


def test_monotone_polyline(tmp_path):
    pts = [(0.02 * k, 10.0 + k * k) for k in range(1, 6)]
    svg = line_chart({"nd": pts}, tmp_path / "m.svg").read_text()
    xy = coords(svg)
    xs, ys = zip(*xy)
    assert list(xs) == sorted(xs)
    assert list(ys) == sorted(ys, reverse=True)  # larger values sit higher (smaller y)


def test_axis_covers_data(tmp_path):
    pts = [(0.0, -3.0), (1.0, 7.0), (2.0, 2.0)]
    svg = line_chart({"a": pts}, tmp_path / "r.svg").read_text()
    for x, y in coords(svg):
        assert MARGIN["left"] <= x <= WIDTH - MARGIN["right"]
        assert MARGIN["top"] <= y <= HEIGHT - MARGIN["bottom"]


def test_log_axis(tmp_path):
    pts = [(k, 10.0 ** -k) for k in range(6)]
    svg = line_chart({"oo p=0.1": pts}, tmp_path / "l.svg", log_y=True).read_text()
    ys = [y for _, y in coords(svg)]
    steps = [b - a for a, b in zip(ys, ys[1:])]
    assert max(steps) - min(steps) < 1e-6 * abs(steps[0]) + 0.02  # equal spacing per decade
