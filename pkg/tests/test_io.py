import json
import struct

import numpy as np
import pytest

from magdiff.errors import ConfigError, InputError, ParseError
from magdiff.features import FeatureKind
from magdiff.io import (
    ExperimentConfig,
    ReportRow,
    emit_power_plot,
    load_dataset_dir,
    load_network,
    load_summaries,
    read_experiment_config,
    read_feature_blob,
    read_idx,
    read_report_csv,
    read_test_vectors,
    report_rows_to_csv,
    save_network,
    save_summaries,
    write_experiment_config,
    write_feature_blob,
    write_idx_images,
    write_idx_labels,
    write_report_csv,
    write_test_vectors,
)
from magdiff.actgraph import MeanGraphSummary, mean_graph_summaries
from magdiff.network import forward_batch, init_mlp


def test_idx_images_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    raw = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    path = tmp_path / "imgs"
    write_idx_images(path, raw)
    back = read_idx(path)
    assert back.shape == (5, 4, 3)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, raw.astype(np.float64) / 255.0)
    assert back.min() >= 0.0 and back.max() <= 1.0


def test_idx_labels_round_trip(tmp_path):
    labels = np.array([0, 9, 3, 3, 7])
    path = tmp_path / "labels"
    write_idx_labels(path, labels)
    back = read_idx(path)
    assert back.dtype == np.int64
    np.testing.assert_array_equal(back, labels)


def test_idx_bad_magic_reports_offset(tmp_path):
    path = tmp_path / "bad"
    path.write_bytes(struct.pack(">I", 0x00000999) + b"\x00" * 16)
    with pytest.raises(ParseError, match=r"bad IDX magic 0x00000999 at byte 0"):
        read_idx(path)


def test_idx_truncated_header_reports_offset(tmp_path):
    path = tmp_path / "short"
    path.write_bytes(struct.pack(">I", 0x00000803) + b"\x00\x00")
    with pytest.raises(ParseError, match=r"truncated IDX header at byte 6"):
        read_idx(path)


def test_idx_truncated_payload_names_lengths(tmp_path):
    good = struct.pack(">IIII", 0x00000803, 2, 3, 3) + b"\x01" * 18
    path = tmp_path / "trunc"
    path.write_bytes(good[:-4])
    with pytest.raises(ParseError, match=r"expected 34 bytes total but file has 30"):
        read_idx(path)


def test_load_dataset_dir_missing_file(tmp_path):
    write_idx_images(tmp_path / "train-images-idx3-ubyte", np.zeros((1, 2, 2), np.uint8))
    with pytest.raises(InputError, match="train-labels-idx1-ubyte"):
        load_dataset_dir(tmp_path)


def test_load_dataset_dir_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    files = {
        "train-images-idx3-ubyte": rng.integers(0, 256, (6, 2, 2), dtype=np.uint8),
        "t10k-images-idx3-ubyte": rng.integers(0, 256, (4, 2, 2), dtype=np.uint8),
    }
    for name, data in files.items():
        write_idx_images(tmp_path / name, data)
    write_idx_labels(tmp_path / "train-labels-idx1-ubyte", np.arange(6) % 3)
    write_idx_labels(tmp_path / "t10k-labels-idx1-ubyte", np.arange(4) % 3)
    tx, ty, vx, vy = load_dataset_dir(tmp_path)
    assert tx.shape == (6, 2, 2) and vx.shape == (4, 2, 2)
    assert ty.shape == (6,) and vy.shape == (4,)


def test_network_round_trip_is_f32_exact(tmp_path):
    net = init_mlp([7, 5, 3], seed=11)
    manifest = save_network(net, tmp_path / "model", metadata={"note": "t"})
    loaded, meta = load_network(manifest)
    assert meta == {"note": "t"}
    assert loaded.class_count == 3
    for orig, back in zip(net.layers, loaded.layers):
        np.testing.assert_array_equal(
            back.weight, orig.weight.astype(np.float32).astype(np.float64)
        )
        np.testing.assert_array_equal(
            back.bias, orig.bias.astype(np.float32).astype(np.float64)
        )
        assert back.activation == orig.activation


def test_network_save_load_save_is_stable(tmp_path):
    net = init_mlp([6, 4, 2], seed=5)
    first = save_network(net, tmp_path / "a")
    loaded, _ = load_network(first)
    save_network(loaded, tmp_path / "b")
    for name in ("manifest.json", "layer_0.weight.f32", "layer_1.bias.f32"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_network_blob_length_mismatch(tmp_path):
    net = init_mlp([4, 3, 2], seed=0)
    manifest = save_network(net, tmp_path / "model")
    blob = tmp_path / "model" / "layer_0.weight.f32"
    blob.write_bytes(blob.read_bytes()[:-4])
    with pytest.raises(ParseError, match=r"expected exactly 48 bytes \(12 f32 values\), got 44"):
        load_network(manifest)


def test_network_manifest_validation(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError, match="invalid JSON"):
        load_network(path)
    path.write_text(json.dumps({"format_version": 2}), encoding="utf-8")
    with pytest.raises(ParseError, match="format_version"):
        load_network(path)
    with pytest.raises(InputError, match="does not exist"):
        load_network(tmp_path / "missing.json")


def test_summaries_round_trip_exact(tmp_path):
    net = init_mlp([6, 5, 3], seed=2)
    rng = np.random.default_rng(0)
    xs = rng.uniform(size=(30, 6))
    labels = rng.integers(0, 3, size=30)
    summaries = mean_graph_summaries(net, xs, labels, layer_index=-1, subset_size=10, seed=4)
    path = tmp_path / "summaries.json"
    save_summaries(path, summaries, meta={"subset_size": 10, "seed": 4})
    back, meta = load_summaries(path)
    assert meta == {"subset_size": 10, "seed": 4}
    assert len(back) == len(summaries)
    for a, b in zip(summaries, back):
        assert a.class_index == b.class_index
        assert a.layer_index == b.layer_index
        assert a.sample_count == b.sample_count
        # JSON float serialization uses repr, which round-trips exactly.
        np.testing.assert_array_equal(a.mean_pre_activation, b.mean_pre_activation)


def test_summaries_validation(tmp_path):
    with pytest.raises(InputError, match="empty"):
        save_summaries(tmp_path / "x.json", [])
    mixed = [
        MeanGraphSummary(0, 1, np.zeros(3), 1),
        MeanGraphSummary(1, 2, np.zeros(3), 1),
    ]
    with pytest.raises(InputError, match="one layer"):
        save_summaries(tmp_path / "x.json", mixed)


def test_feature_blob_round_trip(tmp_path):
    values = np.random.default_rng(1).uniform(size=(9, 4)).astype(np.float32)
    path = tmp_path / "feat.bin"
    write_feature_blob(path, values)
    back = read_feature_blob(path)
    np.testing.assert_array_equal(back, values.astype(np.float64))
    raw = path.read_bytes()
    assert struct.unpack("<II", raw[:8]) == (9, 4)
    assert len(raw) == 8 + 9 * 4 * 4


def test_feature_blob_truncation(tmp_path):
    path = tmp_path / "feat.bin"
    write_feature_blob(path, np.ones((2, 3)))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ParseError, match="expected 32 bytes"):
        read_feature_blob(path)


def test_test_vectors_round_trip(tmp_path):
    net = init_mlp([5, 4, 3], seed=9)
    xs = np.random.default_rng(2).uniform(size=(16, 5))
    _, outputs = forward_batch(net, xs)
    path = tmp_path / "vectors.json"
    write_test_vectors(path, xs, outputs)
    xi, yo = read_test_vectors(path)
    np.testing.assert_array_equal(xi, xs)
    np.testing.assert_array_equal(yo, outputs)


def _some_rows():
    return [
        ReportRow(
            feature="magdiff",
            layer=-1,
            norm="frobenius",
            shift="gaussian_noise",
            intensity="III",
            delta=0.5,
            sample_size=100,
            repetitions=300,
            mode="power",
            estimate=0.8433333333333334,
            ci_half_width=0.04114488,
            seed=991,
        ),
        ReportRow(
            feature="confidence_vector",
            layer=None,
            norm=None,
            shift="gaussian_noise",
            intensity="III",
            delta=0.5,
            sample_size=100,
            repetitions=300,
            mode="type1",
            estimate=1.0 / 3.0,
            ci_half_width=0.0,
            seed=991,
        ),
    ]


def test_report_csv_round_trip_lossless(tmp_path):
    rows = _some_rows()
    path = tmp_path / "report.csv"
    write_report_csv(path, rows)
    back = read_report_csv(path)
    assert back == rows
    # Write-read-write is byte stable.
    again = tmp_path / "again.csv"
    write_report_csv(again, back)
    assert path.read_bytes() == again.read_bytes()


def test_report_csv_layout(tmp_path):
    text = report_rows_to_csv(_some_rows())
    lines = text.strip().split("\n")
    assert lines[0] == (
        "feature,layer,norm,shift,intensity,delta,sample_size,repetitions,"
        "mode,estimate,ci_half_width,seed"
    )
    first = lines[1].split(",")
    assert first[0] == "magdiff"
    assert first[1] == "-1"
    # Estimates carry at least six significant digits.
    assert len(first[9].replace(".", "").lstrip("0")) >= 6
    second = lines[2].split(",")
    assert second[1] == "" and second[2] == ""


def test_report_csv_rejects_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope,header\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 1"):
        read_report_csv(path)
    write_report_csv(path, _some_rows())
    lines = path.read_text().splitlines()
    lines[1] = lines[1].replace("100", "ten", 1)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 2"):
        read_report_csv(path)
    path.write_text("feature,layer\n", encoding="utf-8")
    with pytest.raises(ParseError, match="unexpected header"):
        read_report_csv(path)


def _grid_rows(levels, estimates, feature="magdiff", mode="power", m=100):
    rows = []
    for level, est in zip(levels, estimates):
        rows.append(
            ReportRow(
                feature=feature,
                layer=-1 if feature == "magdiff" else None,
                norm="frobenius" if feature == "magdiff" else None,
                shift="gaussian_noise",
                intensity=level,
                delta=1.0,
                sample_size=m,
                repetitions=200,
                mode=mode,
                estimate=est,
                ci_half_width=0.02,
                seed=7,
            )
        )
    return rows


def test_plot_polyline_count_matches_series():
    rows = _grid_rows(["I", "II", "III"], [0.1, 0.5, 0.9])
    rows += _grid_rows(["I", "II", "III"], [0.2, 0.3, 0.4], feature="confidence_vector")
    svg = emit_power_plot(rows, x_axis="intensity")
    assert svg.count("<polyline") == 2
    assert svg.count("stroke-dasharray") == 1


def test_plot_single_point_series_has_marker_only():
    rows = _grid_rows(["IV"], [0.6])
    svg = emit_power_plot(rows, x_axis="intensity")
    assert svg.count("<polyline") == 0
    assert svg.count("<circle") == 1
    assert 'class="whisker"' in svg


def test_plot_saturated_estimates_sit_on_top_gridline():
    rows = _grid_rows(["I", "II", "IV"], [1.0, 1.0, 1.0])
    svg = emit_power_plot(rows, x_axis="intensity")
    polyline = [line for line in svg.splitlines() if "<polyline" in line][0]
    points = polyline.split('points="')[1].split('"')[0].split()
    ys = {point.split(",")[1] for point in points}
    assert len(ys) == 1
    top_grid = [line for line in svg.splitlines() if 'class="grid"' in line][-1]
    assert f'y1="{list(ys)[0]}"' in top_grid


def test_plot_sample_size_axis_is_log_spaced():
    rows = []
    for m in (10, 100, 1000):
        rows += _grid_rows(["III"], [0.5], m=m)
    svg = emit_power_plot(rows, x_axis="sample_size")
    polyline = [line for line in svg.splitlines() if "<polyline" in line][0]
    points = polyline.split('points="')[1].split('"')[0].split()
    xs = [float(p.split(",")[0]) for p in points]
    # Log scale makes decade steps equidistant.
    assert xs[1] - xs[0] == pytest.approx(xs[2] - xs[1], abs=0.05)
    assert "log scale" in svg


def test_plot_has_config_echo_and_writes_file(tmp_path):
    rows = _grid_rows(["I", "II"], [0.1, 0.2])
    path = tmp_path / "plot.svg"
    svg = emit_power_plot(rows, x_axis="intensity", path=path)
    assert path.read_text("utf-8") == svg
    assert "<desc>config:" in svg
    assert "gaussian_noise" in svg
    assert "seed=7" in svg


def test_plot_input_validation():
    with pytest.raises(InputError, match="x_axis"):
        emit_power_plot(_grid_rows(["I"], [0.1]), x_axis="time")
    with pytest.raises(InputError, match="at least one row"):
        emit_power_plot([], x_axis="intensity")
    custom = _grid_rows(["I"], [0.1])
    custom[0].intensity = "custom"
    with pytest.raises(InputError, match="ladder levels"):
        emit_power_plot(custom, x_axis="intensity")


CONFIG_TEXT = """
[data]
dir = data/mnist
train_limit = 10000

[model]
manifest = model/manifest.json

[summaries]
path = model/summaries.json

[grid]
features = magdiff,cv
norms = frobenius,spectral
layers = -1
shifts = gaussian_noise,gaussian_blur
levels = I,III,VI
deltas = 0.5,1.0
sample_sizes = 20,100
modes = power,type1

[test]
alpha = 0.05
repetitions = 300
seed = 2024

[ladders]
gaussian_noise.sigma = 0.01,0.02,0.04,0.08,0.16,0.32

[output]
csv = out/report.csv
plots = out/plots
x_axis = intensity
"""


def test_config_parse(tmp_path):
    path = tmp_path / "grid.ini"
    path.write_text(CONFIG_TEXT, encoding="utf-8")
    cfg = read_experiment_config(path)
    assert cfg.data_dir == "data/mnist"
    assert cfg.train_limit == 10000
    labels = [k.label() for k in cfg.features]
    assert labels == [
        "magdiff[layer=-1,norm=frobenius]",
        "magdiff[layer=-1,norm=spectral]",
        "cv",
    ]
    assert cfg.shift_kinds == ["gaussian_noise", "gaussian_blur"]
    assert cfg.levels == ["I", "III", "VI"]
    assert cfg.deltas == [0.5, 1.0]
    assert cfg.sample_sizes == [20, 100]
    assert cfg.modes == ["power", "type1"]
    assert cfg.alpha == 0.05 and cfg.repetitions == 300 and cfg.seed == 2024
    assert cfg.ladders == {
        "gaussian_noise": {"sigma": [0.01, 0.02, 0.04, 0.08, 0.16, 0.32]}
    }
    assert cfg.csv_path == "out/report.csv"


def test_config_round_trip(tmp_path):
    path = tmp_path / "grid.ini"
    path.write_text(CONFIG_TEXT, encoding="utf-8")
    cfg = read_experiment_config(path)
    out = tmp_path / "echo.ini"
    write_experiment_config(cfg, out)
    again = read_experiment_config(out)
    assert again == cfg


def test_config_errors(tmp_path):
    path = tmp_path / "grid.ini"

    def with_patch(old, new):
        path.write_text(CONFIG_TEXT.replace(old, new), encoding="utf-8")
        return path

    with pytest.raises(ConfigError, match="missing"):
        read_experiment_config(with_patch("repetitions = 300\n", ""))
    with pytest.raises(ConfigError, match="unknown shift kind"):
        read_experiment_config(with_patch("gaussian_noise,gaussian_blur", "melt"))
    with pytest.raises(ConfigError, match="unknown intensity level"):
        read_experiment_config(with_patch("I,III,VI", "I,VII"))
    with pytest.raises(ConfigError, match="unknown mode"):
        read_experiment_config(with_patch("power,type1", "power,both"))
    with pytest.raises(ConfigError, match="needs 6 values"):
        read_experiment_config(
            with_patch("0.01,0.02,0.04,0.08,0.16,0.32", "0.01,0.02")
        )
    with pytest.raises(ConfigError, match="names no known parameter"):
        read_experiment_config(with_patch("gaussian_noise.sigma", "gaussian_noise.mu"))
    with pytest.raises(InputError, match="does not exist"):
        read_experiment_config(tmp_path / "nope.ini")


def test_config_defaults(tmp_path):
    minimal = """
[data]
dir = d

[model]
manifest = m.json

[summaries]
path = s.json

[grid]
features = cv
shifts = gaussian_noise
deltas = 1.0
sample_sizes = 50

[test]
repetitions = 100
seed = 1
"""
    path = tmp_path / "grid.ini"
    path.write_text(minimal, encoding="utf-8")
    cfg = read_experiment_config(path)
    assert cfg.levels == list("I II III IV V VI".split())
    assert cfg.modes == ["power", "type1"]
    assert cfg.alpha == 0.05
    assert cfg.x_axis == "intensity"
    assert isinstance(cfg, ExperimentConfig)
