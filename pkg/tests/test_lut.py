import json

import numpy as np
import pytest

from bwnas.errors import IncompatibleError, LutFormatError, MissingMeasurementError
from bwnas.lut import (
    LutOptions,
    SyntheticLatency,
    TableLatency,
    build_luts,
    evaluate_block_losses,
    layer_macs,
    lut_filename,
    make_manifest,
    model_size_bits,
    read_luts,
    write_luts,
)
from bwnas.quant import QuantMenu
from bwnas.space import BlockSpec, OpChoice, SearchSpace, default_space
from bwnas.synthnet import evaluate_block, fit_projection, make_student_block


def test_toy_size():
    b = BlockSpec(0, 1, 1, 1, (OpChoice(1, 1),))
    assert model_size_bits(b, 0, 8) == 24


def test_size_linear_in_bits():
    b = default_space().blocks[2]
    for v in (0, 17, 1295):
        assert model_size_bits(b, v, 4) * 2 == model_size_bits(b, v, 8)


def test_size_shape_walk_oracle(rng):
    space = default_space()
    for _ in range(10):
        b = space.blocks[int(rng.integers(space.num_blocks))]
        v = int(rng.integers(b.num_subnets))
        net = make_student_block(b, v, seed=0)
        walked = sum(int(np.prod(t.shape)) for t in net.weight_tensors())
        assert model_size_bits(b, v, 6) == walked * 6


def test_synthetic_latency_monotone_in_macs():
    b = BlockSpec(0, 2, 8, 8)
    model = SyntheticLatency()
    rows = []
    for v in range(b.num_subnets):
        macs = sum(layer_macs(b, k, b.op_menu[(v // 6**k) % 6], 16) for k in range(2))
        rows.append((macs, model.latency(b, v)))
    rows.sort()
    assert all(a[1] <= c[1] for a, c in zip(rows, rows[1:]))


def test_table_latency(tmp_path):
    p = tmp_path / "lat.csv"
    p.write_text("block,subnet_id,latency_us\n0,0,1.5\n0,1,2.5\n")
    model = TableLatency.from_csv(p)
    b = BlockSpec(0, 1, 4, 4)
    assert model.latency(b, 1) == 2.5
    with pytest.raises(MissingMeasurementError) as info:
        model.latency(b, 2)
    assert (info.value.block, info.value.subnet) == (0, 2)
    p.write_text("block,subnet_id,latency_us\n0,x,1\n")
    with pytest.raises(LutFormatError) as info:
        TableLatency.from_csv(p)
    assert info.value.line == 2


@pytest.mark.parametrize("fit", [False, True])
def test_prefix_tree_matches_direct(smoke_setup, fit):
    space, _, calib = smoke_setup
    block = space.blocks[0]
    x, y = calib.inputs[0], calib.targets[0]
    losses = evaluate_block_losses(block, x, y, [4, 8], seed=1, fit=fit)
    for v in (0, 5, 14, 35):
        net = make_student_block(block, v, 1)
        if fit:
            net = fit_projection(net, x, y)
        for b in (4, 8):
            assert losses[b][v] == evaluate_block(net, x, y, bits=b, act_bits=8)


def test_build_shape_and_latency_policy(smoke_setup):
    space, teacher, calib = smoke_setup
    luts = build_luts(space, teacher, QuantMenu(), calib, LutOptions(latency=SyntheticLatency()))
    assert [(l.block, l.bitwidth) for l in luts] == [(b, w) for b in range(2) for w in (4, 6, 8)]
    assert [len(l) for l in luts] == [36] * 3 + [6] * 3
    assert [l.has_latency for l in luts] == [False, False, True] * 2
    for l in luts:
        assert [e.subnet_id for e in l.entries] == list(range(len(l)))


def test_persistence_roundtrip_and_guards(tmp_path, smoke_space, smoke_luts):
    d = tmp_path / "luts"
    write_luts(smoke_luts, make_manifest(smoke_space, (4, 6, 8)), d)
    assert sorted(p.name for p in d.iterdir())[:2] == [lut_filename(0, 4), lut_filename(0, 6)]
    back, manifest = read_luts(d, smoke_space)
    assert back == smoke_luts
    assert manifest["space_hash"]

    with pytest.raises(IncompatibleError):
        read_luts(d, default_space())

    f = d / lut_filename(1, 6)
    text = f.read_text()
    f.write_text(text.replace(text.splitlines()[2], "zzz,1,2,"))
    with pytest.raises(IncompatibleError):
        read_luts(d)
    m = json.loads((d / "manifest.json").read_text())
    m["files"][f.name] = __import__("hashlib").sha256(f.read_bytes()).hexdigest()
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(LutFormatError) as info:
        read_luts(d)
    assert info.value.line == 3

    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(LutFormatError):
        read_luts(empty)


def test_parallel_build_identical(smoke_setup, smoke_luts):
    space, teacher, calib = smoke_setup
    opts = LutOptions(fit=True, latency=SyntheticLatency(), latency_all_bits=True, workers=2)
    assert build_luts(space, teacher, QuantMenu(), calib, opts) == smoke_luts
