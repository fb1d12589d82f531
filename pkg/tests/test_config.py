import pytest

from fastr2d2.config import RunConfig


def test_defaults():
    cfg = RunConfig()
    assert (cfg.lr_encoder, cfg.lr_parser, cfg.k, cfg.m) == (5e-5, 1e-2, 256, 4)


def test_text_round_trip(tmp_path):
    cfg = RunConfig(m=3, k=7, straight_through=False, vocab_path="v.txt")
    cfg.save(tmp_path / "c.txt")
    assert RunConfig.load(tmp_path / "c.txt") == cfg


def test_comments_and_partial_files():
    cfg = RunConfig.from_text("# tiny\nm = 2  # window\n\nlr_encoder = 1e-3\n")
    assert cfg.m == 2 and cfg.lr_encoder == 1e-3 and cfg.k == 256


def test_flags_override_file_values():
    cfg = RunConfig.from_text("m = 3\nk = 5\n").replace(m=6, k=None)
    assert (cfg.m, cfg.k) == (6, 5)


@pytest.mark.parametrize(
    "text",
    ["m = 1", "k = 0", "lr_encoder = 0", "mode = eval", "dim = 10\nheads = 4", "bogus = 1", "no equals sign", "straight_through = maybe"],
)
def test_invalid_configs_rejected(text):
    with pytest.raises(ValueError):
        RunConfig.from_text(text)
