import json

import numpy as np
import pytest

from gssfcap.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from gssfcap.data import build_vocab
from gssfcap.errors import ValidationError

from helpers import random_biases, tiny_params


def _ckpt(variant="gsscn"):
    vocab = build_vocab(["a b"])
    params = random_biases(tiny_params(variant, seed=4), 4)
    return Checkpoint(params, vocab, 0.75, 2, {"note": "x"})


@pytest.mark.parametrize("variant", ["lstm", "gst", "gsscn"])
def test_round_trip_bit_exact(tmp_path, variant):
    ckpt = _ckpt(variant)
    save_checkpoint(ckpt, tmp_path / "a.json")
    back = load_checkpoint(tmp_path / "a.json")
    assert back.config == ckpt.config
    assert back.params.names() == ckpt.params.names()
    for name in ckpt.params.names():
        assert back.params[name].tobytes() == ckpt.params[name].tobytes()
    assert (back.sigma, back.radius, back.meta) == (0.75, 2, {"note": "x"})
    assert back.vocab.itos == ckpt.vocab.itos
    save_checkpoint(back, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_tampered_vocab_rejected(tmp_path):
    save_checkpoint(_ckpt(), tmp_path / "a.json")
    doc = json.loads((tmp_path / "a.json").read_text())
    doc["vocab"]["itos"][-1] = "zzz"
    (tmp_path / "a.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="hash"):
        load_checkpoint(tmp_path / "a.json")


def test_bad_files_rejected(tmp_path):
    (tmp_path / "x.json").write_text("not json")
    with pytest.raises(ValidationError):
        load_checkpoint(tmp_path / "x.json")
    (tmp_path / "y.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValidationError):
        load_checkpoint(tmp_path / "y.json")
    save_checkpoint(_ckpt(), tmp_path / "z.json")
    doc = json.loads((tmp_path / "z.json").read_text())
    doc["version"] = 99
    (tmp_path / "z.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="version"):
        load_checkpoint(tmp_path / "z.json")


def test_params_survive_json_floats(tmp_path):
    ckpt = _ckpt("lstm")
    odd = ckpt.params.replace(b_i=np.array([1e-300, -0.1, np.pi, 2.0 ** 60]))
    save_checkpoint(Checkpoint(odd, ckpt.vocab, 1.0), tmp_path / "o.json")
    assert load_checkpoint(tmp_path / "o.json").params["b_i"].tobytes() == odd["b_i"].tobytes()
