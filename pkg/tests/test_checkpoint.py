import numpy as np
import pytest

from rtse.checkpoint import Checkpoint, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from rtse.dsp import FrameConfig
from rtse.errors import DataError
from rtse.features import FeatureKind, GlobalStats
from rtse.model import init_params
from rtse.training.optim import AdamState


def make(with_stats=True, with_opt=True):
    params = init_params(seed=5, hidden=4, input_dim=257)
    stats = GlobalStats(np.linspace(-3, 2, 257), np.linspace(1, 9, 257), 40) if with_stats else None
    opt = None
    if with_opt:
        opt = AdamState(lr=1e-3, step=7, m={k: np.full_like(v, 0.1) for k, v in params.arrays().items()},
                        v={k: np.full_like(v, 0.2) for k, v in params.arrays().items()})
    kind = FeatureKind("lps", "global" if with_stats else "fd_online", 2.5)
    return Checkpoint(FrameConfig(), kind, params, stats, {"steps": 7, "seed": 1, "loss": "mse"}, opt)


@pytest.mark.parametrize("with_stats,with_opt", [(True, True), (False, False), (False, True)])
def test_save_load_save_byte_identical(tmp_path, with_stats, with_opt):
    ck = make(with_stats, with_opt)
    save_checkpoint(tmp_path / "a.ckpt", ck)
    loaded = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(tmp_path / "b.ckpt", loaded)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_round_trip_contents():
    ck = make()
    back = from_bytes(to_bytes(ck))
    assert back.kind == ck.kind
    assert back.frame_cfg == ck.frame_cfg
    assert back.meta == ck.meta
    for k, v in ck.params.arrays().items():
        np.testing.assert_array_equal(back.params.arrays()[k], v)
    np.testing.assert_array_equal(back.stats.mean, ck.stats.mean)
    assert back.stats.count == 40
    assert back.optimizer.step == 7
    np.testing.assert_array_equal(back.optimizer.v["fc.bias"], ck.optimizer.v["fc.bias"])


def test_header_is_text_and_versioned():
    data = to_bytes(make())
    head = data.split(b"\nend\n", 1)[0].decode("ascii")
    assert head.startswith("RTSE-CHECKPOINT 1\n")
    assert "field param/gru0.W_z <f8 4x257" in head


@pytest.mark.parametrize("mutate", [
    lambda b: b.replace(b"RTSE-CHECKPOINT 1", b"RTSE-CHECKPOINT 9", 1),
    lambda b: b"garbage" + b,
    lambda b: b[:-10],
])
def test_corrupt_rejected(mutate):
    with pytest.raises(DataError):
        from_bytes(mutate(to_bytes(make())))


def test_save_is_atomic_and_leaves_no_temp(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", make())
    save_checkpoint(tmp_path / "m.ckpt", make(False, False))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["m.ckpt"]
    assert load_checkpoint(tmp_path / "m.ckpt").optimizer is None


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "none.ckpt")
