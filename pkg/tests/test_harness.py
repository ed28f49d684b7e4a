import numpy as np
import pytest

from deda.diffusion import build_schedule
from deda.errors import DivergedError
from deda.harness import (ExperimentReport, LinearModel,
                          ReportRow, ShapesConfig, add_toy_synthetics,
                          build_shapes_bank, evaluate, gen_shapes_dataset,
                          loss_and_grad, render_item, run_diversity_report,
                          swap_backgrounds, train_linear, write_report_jsonl,
                          write_report_tsv)
from deda.imagecore import PSNR_CAP_DB


SMALL = ShapesConfig(canvas=32, m_per_class=8, test_per_class=4)


# ---------------------------------------------------------------------------
# dataset generation

def test_dataset_deterministic_under_seed():
    a = gen_shapes_dataset(SMALL)
    b = gen_shapes_dataset(SMALL)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.masks, b.masks)
    assert np.array_equal(a.bg_ids, b.bg_ids)
    c = gen_shapes_dataset(SMALL, seed=99)
    assert not np.array_equal(a.images, c.images)


def test_masks_exactly_cover_shape_pixels():
    ds = gen_shapes_dataset(SMALL)
    for i in (0, 5, 17):
        spec = ds.specs[i]
        recolored = type(spec)(shape_id=spec.shape_id, cy=spec.cy, cx=spec.cx,
                               radius=spec.radius, color=(1, 2, 3))
        image2, _ = render_item(SMALL, recolored, int(ds.bg_ids[i]))
        differs = (image2 != ds.images[i]).any(axis=2)
        assert np.array_equal(differs, ds.masks[i] >= 128)


def test_rho_one_backgrounds_match_class():
    ds = gen_shapes_dataset(ShapesConfig(canvas=32, m_per_class=10, rho=1.0))
    assert np.array_equal(ds.bg_ids, ds.labels)


def test_rho_zero_backgrounds_independent_chi_square():
    from scipy.stats import chi2_contingency
    cfg = ShapesConfig(canvas=32, m_per_class=500, rho=0.0)
    ds = gen_shapes_dataset(cfg)
    table = np.zeros((cfg.n_classes, cfg.n_classes))
    for lab, bg in zip(ds.labels, ds.bg_ids):
        table[lab, bg] += 1
    _, p, _, _ = chi2_contingency(table)
    assert p > 0.001


def test_swap_backgrounds_never_keeps_class_texture():
    ds = gen_shapes_dataset(ShapesConfig(canvas=32, m_per_class=6, rho=1.0))
    swapped = swap_backgrounds(ds, seed=3)
    # shape pixels unchanged, background pixels replaced by another texture
    for i in range(len(ds.images)):
        fg = ds.masks[i] >= 128
        assert np.array_equal(swapped[i][fg], ds.images[i][fg])
        assert (swapped[i][~fg] != ds.images[i][~fg]).any()


def test_config_validation():
    with pytest.raises(ValueError):
        ShapesConfig(n_classes=9)
    with pytest.raises(ValueError):
        ShapesConfig(rho=1.5)


# ---------------------------------------------------------------------------
# linear model

def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    model = LinearModel(weights=rng.normal(size=(3, 12)) * 0.1,
                        bias=rng.normal(size=3) * 0.1)
    image = rng.integers(0, 256, size=(2, 2, 3)).astype(np.uint8)
    label = {0: 0.6, 2: 0.4}
    loss, gw, gb = loss_and_grad(model, image, label)

    h = 1e-6
    worst = 0.0
    for arr, grad in ((model.weights, gw), (model.bias, gb)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up, _, _ = loss_and_grad(model, image, label)
            arr[idx] = old - h
            dn, _, _ = loss_and_grad(model, image, label)
            arr[idx] = old
            fd = (up - dn) / (2 * h)
            denom = max(abs(fd), abs(grad[idx]), 1e-8)
            worst = max(worst, abs(fd - grad[idx]) / denom)
    assert worst < 1e-4


def test_soft_label_loss_differs_by_analytic_amount():
    rng = np.random.default_rng(1)
    model = LinearModel(weights=rng.normal(size=(2, 12)) * 0.2,
                        bias=np.zeros(2))
    image = rng.integers(0, 256, size=(2, 2, 3)).astype(np.uint8)
    loss_soft, _, _ = loss_and_grad(model, image, {0: 0.75, 1: 0.25})
    loss_hot, _, _ = loss_and_grad(model, image, {0: 1.0})
    x = image.reshape(-1) / 255.0
    z = model.weights @ x + model.bias
    p = np.exp(z - z.max())
    p /= p.sum()
    # difference = 0.25 * (log p_0 - log p_1)
    assert loss_soft - loss_hot == pytest.approx(
        0.25 * (np.log(p[0]) - np.log(p[1])), abs=1e-9)


def test_train_linear_lr_zero_is_noop():
    model = LinearModel.zeros(2, 12)
    data = [(np.zeros((2, 2, 3), dtype=np.uint8), {0: 1.0})]
    res = train_linear(model, lambda rng: iter(data), epochs=3, lr=0.0,
                       rng=np.random.default_rng(0))
    assert (res.model.weights == 0).all() and (res.model.bias == 0).all()
    assert len(res.epoch_losses) == 3


def test_train_linear_single_sample_converges_confident():
    rng = np.random.default_rng(2)
    image = rng.integers(0, 256, size=(4, 4, 3)).astype(np.uint8)
    model = LinearModel.zeros(3, 48)
    res = train_linear(model, lambda r: iter([(image, {1: 1.0})]),
                       epochs=400, lr=0.5, rng=rng)
    x = image.reshape(-1) / 255.0
    z = res.model.weights @ x + res.model.bias
    p = np.exp(z - z.max())
    p /= p.sum()
    assert p[1] > 0.99


def test_train_linear_diverged_guard():
    model = LinearModel(weights=np.full((2, 3), 1e308), bias=np.zeros(2))
    data = [(np.full((1, 1, 3), 255, dtype=np.uint8), {0: 1.0})]
    with pytest.raises(DivergedError):
        train_linear(model, lambda rng: iter(data), epochs=2, lr=1e308,
                     rng=np.random.default_rng(0))


def test_evaluate_exact_fraction():
    model = LinearModel.zeros(2, 12)
    model.bias[1] = 1.0          # always predicts class 1
    images = np.zeros((4, 2, 2, 3), dtype=np.uint8)
    labels = np.array([1, 1, 0, 1])
    assert evaluate(model, images, labels) == 0.75


# ---------------------------------------------------------------------------
# bank build + diversity report

def test_build_shapes_bank_and_synthetics(tmp_path):
    ds = gen_shapes_dataset(SMALL)
    bank = build_shapes_bank(tmp_path / "bank", ds)
    stats = bank.stats()
    assert stats.C == 4 and stats.M == 8 and stats.K == 0
    assert len(bank.cip_records) == 32
    add_toy_synthetics(bank, build_schedule(), strength=0.4, k=2, seed=0)
    bank.verify()
    assert bank.stats().K == 2
    # resumable: a second call adds nothing
    n = len(bank.cdp_records)
    add_toy_synthetics(bank, build_schedule(), strength=0.4, k=2, seed=0)
    assert len(bank.cdp_records) == n


def test_diversity_report_monotone(tmp_path):
    ds = gen_shapes_dataset(SMALL)
    bank = build_shapes_bank(tmp_path / "bank", ds)
    report = run_diversity_report(bank, [0.0, 0.2, 0.4, 0.8], n=12,
                                  sched=build_schedule(), seed=0)
    strengths = [s for s, _ in report]
    values = [v for _, v in report]
    assert strengths == [0.0, 0.2, 0.4, 0.8]
    assert values[0] == PSNR_CAP_DB
    assert all(a > b for a, b in zip(values, values[1:]))


def test_diversity_report_empty():
    from deda.bank import Bank, ClassInfo
    import tempfile
    with tempfile.TemporaryDirectory() as d:
        bank = Bank.create(d, [ClassInfo(0, "x")])
        report = run_diversity_report(bank, [0.0, 0.4], n=0)
        assert [s for s, _ in report] == [0.0, 0.4]
        assert all(np.isnan(v) for _, v in report)


# ---------------------------------------------------------------------------
# report writers

def test_report_writers(tmp_path):
    report = ExperimentReport(rows=[
        ReportRow("none", 0, 0.9, 0.1, None, 1.0),
        ReportRow("none", "mean", 0.9, 0.1, None, 1.0),
    ])
    tsv = tmp_path / "r.tsv"
    jsonl = tmp_path / "r.jsonl"
    write_report_tsv(report, tsv)
    write_report_jsonl(report, jsonl)
    lines = tsv.read_text().splitlines()
    assert lines[0].startswith("method\tseed")
    assert len(lines) == 3
    import json
    recs = [json.loads(l) for l in jsonl.read_text().splitlines()]
    assert recs[0]["method"] == "none"
    assert recs[1]["seed"] == "mean"
