import numpy as np
import pytest

import srn


def test_render_is_deterministic_and_sized():
    a = srn.render_word("cane", seed=5)
    b = srn.render_word("cane", seed=5)
    assert a.shape == (16, 64)
    assert a.dtype == np.uint8
    assert np.array_equal(a, b)
    assert not np.array_equal(a, srn.render_word("cane", seed=6))


def test_unknown_symbol_is_rejected():
    with pytest.raises(srn.InputError):
        srn.render_word("xyz", seed=1)


def test_charset_round_trip():
    cs = srn.Charset.standard()
    assert len(cs.symbols) == 12
    assert cs.num_classes == 13
    labels = cs.encode("lion", 8)
    assert labels[4:] == [cs.eos] * 4
    assert cs.decode(labels) == "lion"


def test_lexicon_disambiguates():
    cs = srn.Charset.standard()
    lex = srn.generate_lexicon(cs, 50, 3, 6, 7)
    assert len(lex) == 50
    assert len(set(lex)) == 50
    assert srn.check_disambiguation(lex, cs) == ""


def test_config_rejects_unknown_keys():
    text = srn.normalize_config("d_model=32\nbackbone_heads=4\ngsrm_heads=4\n")
    assert "d_model=32" in text
    with pytest.raises(srn.ConfigError):
        srn.normalize_config("colour=blue\n")


def test_metrics():
    assert srn.edit_distance([1, 2, 3], [1, 3]) == 1
    word, char = srn.score([[1, 2], [3]], [[1, 2], [4]])
    assert word == 0.5
    assert char == 0.5


def test_pgm_round_trip(tmp_path):
    img = srn.render_word("lean", seed=2)
    srn.write_pgm(tmp_path / "x.pgm", img)
    assert np.array_equal(srn.read_pgm(tmp_path / "x.pgm"), img)


def test_gradient_check_passes():
    results = srn.gradient_check(instances=2, seed=3, modules=["nn-blocks", "vsfd"])
    assert [r["module"] for r in results] == ["nn-blocks", "vsfd"]
    for r in results:
        assert r["passed"] == r["instances"] == 2
        assert r["max_rel_error"] <= 1e-4


def test_train_checkpoint_and_infer(tmp_path):
    config = "\n".join([
        "conv_widths=4,8,16", "d_model=16", "backbone_units=1", "backbone_heads=4",
        "backbone_ff=32", "gsrm_units=1", "gsrm_heads=4", "gsrm_ff=32",
        "warmup_epochs=1", "joint_epochs=1", "data_count=120", "lexicon_size=10",
    ])
    ckpt = tmp_path / "m.ckpt"
    outcome = srn.train(config, str(ckpt))
    assert len(outcome.log) == 2
    assert outcome.log[0].startswith("epoch 1 L_e ")
    assert 0.0 <= outcome.test_word_accuracy <= 1.0
    again = srn.train(config, "")
    assert again.log == outcome.log
    srn.write_pgm(tmp_path / "in.pgm", srn.render_word("lean", seed=1))
    text, files = srn.infer(ckpt, tmp_path / "in.pgm", True, tmp_path / "maps")
    assert len(files) == len(text)
    assert set(text) <= set(srn.Charset.standard().symbols)
