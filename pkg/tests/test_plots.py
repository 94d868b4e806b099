from stepprobe.plots import ratio_curve, selection_bars

POINTS = [
    {"d": 4, "value": 0.6, "low": 0.5, "high": 0.7},
    {"d": 3, "value": None, "low": None, "high": None},
    {"d": 2, "value": 1.0, "low": 0.95, "high": 1.0},
]

ROWS = [
    {"variant": "base", "frequency": 0.5, "low": 0.4, "high": 0.6},
    {"variant": "overlap", "frequency": None, "low": None, "high": None},
    {"variant": "negative", "frequency": 0.0, "low": 0.0, "high": 0.05},
]


def test_ratio_curve_renders(tmp_path):
    path = ratio_curve(POINTS, tmp_path / "curve.svg", chance=1 / 9)
    content = path.read_text()
    assert content.lstrip().startswith("<?xml")
    assert "chance = 0.111" in content


def test_ratio_curve_handles_empty(tmp_path):
    # every point undefined: the figure still renders with bare axes
    empty = [{"d": 4, "value": None, "low": None, "high": None}]
    assert ratio_curve(empty, tmp_path / "empty.svg").exists()


def test_selection_bars_renders(tmp_path):
    path = selection_bars(ROWS, tmp_path / "bars.svg")
    assert path.exists()
    assert "overlap" in path.read_text()


def test_figures_are_byte_stable(tmp_path):
    a = ratio_curve(POINTS, tmp_path / "a.svg", title="t")
    b = ratio_curve(POINTS, tmp_path / "b.svg", title="t")
    assert a.read_bytes() == b.read_bytes()
    c = selection_bars(ROWS, tmp_path / "c.svg", title="t")
    d = selection_bars(ROWS, tmp_path / "d.svg", title="t")
    assert c.read_bytes() == d.read_bytes()
