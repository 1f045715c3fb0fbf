import logging

import pytest

from rffcomm.config import parse_config, parse_config_text
from rffcomm.errors import ConfigError


def errors_of(text):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, source="c.cfg")
    return info.value.errors


def test_empty_file_lists_both_required_keys():
    errs = errors_of("")
    assert any("'experiment'" in e for e in errs)
    assert any("'seed'" in e for e in errs)


def test_minimal_config_logs_defaults(caplog):
    with caplog.at_level(logging.INFO, logger="rffcomm.config"):
        cfg = parse_config_text("experiment = ldpc_ber\nseed = 3\n")
    assert cfg.seed == 3 and cfg.variants == ("none", "rff", "ddrff")
    assert cfg["max_outer"] == 5 and cfg["channel"] == "rapp"
    assert "ldpc_ber: max_outer = 5 (default)" in caplog.text
    assert "variants = none, rff, ddrff (default)" in caplog.text


def test_section_values_are_typed():
    cfg = parse_config_text(
        "experiment = losnlos\nseed = 1\n[losnlos]\n"
        "train_sizes = 50, 100\nroc_train_size = 100\ntest_starts = 1 2, 3.5 4\ntrain_start = 0 0\n"
    )
    assert cfg["train_sizes"] == (50, 100)
    assert cfg["test_starts"] == ((1.0, 2.0), (3.5, 4.0))
    assert cfg["train_start"] == (0.0, 0.0)


def test_duplicate_key_names_both_lines():
    errs = errors_of("experiment = ldpc_ber\nseed = 1\nseed = 2\n")
    assert errs == ["c.cfg:3: duplicate key 'seed' (first set on line 2, again on line 3)"]


def test_unknown_keys_and_sections():
    errs = errors_of("experiment = ldpc_ber\nseed = 1\ncolour = red\n[ldpc_ber]\nsnr = 1\n[plotting]\n")
    assert "c.cfg:3: unknown key 'colour'" in errs
    assert "c.cfg:5: unknown key 'snr' in section [ldpc_ber]" in errs
    assert "c.cfg:6: unknown section [plotting]" in errs


def test_key_in_another_experiments_section():
    errs = errors_of("experiment = ldpc_ber\nseed = 1\n[losnlos]\nepochs = 3\n")
    assert errs == ["c.cfg:4: key 'epochs' is in section [losnlos] but experiment is ldpc_ber"]


def test_all_errors_reported_together():
    errs = errors_of("experiment = ldpc_ber\nseed = -1\nworkers = many\n[ldpc_ber]\nsnr_db = 1,,2\nnoiseless = maybe\n")
    assert len(errs) == 4
    assert [e.split(":")[1] for e in errs] == ["2", "3", "5", "6"]


@pytest.mark.parametrize("body,fragment", [
    ("experiment = kernel_bench\nseed = 1\nvariants = none, rff\n", "variant 'none'"),
    ("experiment = losnlos\nseed = 1\n[losnlos]\ntrain_sizes = 10, 20\n", "roc_train_size 400 is not in train_sizes"),
    ("experiment = ldpc_ber\nseed = 1\n[ldpc_ber]\nmemory_alpha = 1.0\n", "memory_alpha must be < 1"),
    ("experiment = ldpc_ber\nseed = 18446744073709551616\n", "must be <="),
    ("experiment = ldpc_ber\nseed = 1\n[ldpc_ber]\nridge = nan\n", "must be finite"),
    ("experiment = ldpc_ber\nseed = 1\n[ldpc_ber]\nkernel_width = wide\n", "expected a number"),
    ("experiment = magic\nseed = 1\n", "expected one of"),
    ("experiment = ldpc_ber\nseed = 1\njust words\n", "expected 'key = value'"),
])
def test_rejected(body, fragment):
    assert any(fragment in e for e in errors_of(body))


def test_largest_seed_accepted():
    assert parse_config_text(f"experiment = ldpc_ber\nseed = {2**64 - 1}\n").seed == 2**64 - 1


def test_with_seed_bounds():
    cfg = parse_config_text("experiment = ldpc_ber\nseed = 1\n")
    assert cfg.with_seed(9).seed == 9
    with pytest.raises(ConfigError):
        cfg.with_seed(-1)


@pytest.mark.parametrize("experiment", ["kernel_bench", "losnlos", "ldpc_ber"])
def test_resolved_lines_round_trip(experiment):
    cfg = parse_config_text(f"experiment = {experiment}\nseed = 12\n")
    again = parse_config_text("\n".join(cfg.resolved_lines()))
    assert again == cfg


def test_comments_and_file_errors(tmp_path):
    path = tmp_path / "x.cfg"
    path.write_text("; note\n# other\nexperiment = kernel_bench\nseed = 4  \n\n[kernel_bench]\nbandwidth = 0.3\n")
    cfg = parse_config(path)
    assert cfg["bandwidth"] == 0.3 and cfg.variants == ("rff", "ddrff")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.cfg")
