import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvm.config import SCHEMA, ConfigError, parse_config, serialize_config


def test_empty_model_section_gives_defaults():
    cfg = parse_config("[model]\n")
    p = cfg.model
    assert (p.rho, p.u, p.r_c, cfg.L) == (0.5, 0.5, 1.0, 32.0)
    assert cfg.mode == "simulate" and cfg.seed == 0
    assert cfg.integrator.noise_model == "gaussian"
    assert cfg.transient == cfg.n_steps // 2


def test_round_trip_is_identity_on_canonical_text():
    text = "[run]\nmode = sweep\nseed = 12\n\n[model]\nrho = 0.25  # sparse\nxi_noise = 0.4\n[sweep]\nxi = 0.1, 0.2\n"
    canonical = serialize_config(parse_config(text))
    assert serialize_config(parse_config(canonical)) == canonical
    assert "rho = 0.25" in canonical and "xi = 0.1, 0.2" in canonical


def test_negative_rho_names_key_and_invariant():
    with pytest.raises(ConfigError) as err:
        parse_config("[model]\nrho = -1\n")
    msg = str(err.value)
    assert "rho" in msg and "positivity" in msg and "line 2" in msg


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("[model]\nbogus = 1\n", "unknown key 'bogus'"),
        ("[nope]\n", "unknown section"),
        ("rho = 1\n", "outside of any section"),
        ("[model]\nrho = abc\n", "line 2: rho"),
        ("[model]\nrho\n", "expected 'key = value'"),
        ("[model]\nrho = 1\nrho = 2\n", "duplicate key 'rho'"),
        ("[model]\ndims = 4\n", "dims"),
        ("[model]\nL = 1.5\n", "r_c"),
        ("[integrator]\nn_steps = 10\ntransient = 20\n", "transient"),
        ("[model]\ngamma_s = 20\n", "dt*gamma_s"),
        ("[integrator]\nnoise_model = pink\n", "noise_model"),
        ("[model]\nrho = nan\n", "finite"),
        ("[run]\nseed = -1\n", "seed"),
        ("[model]\nu = 0.5\n[model\n", "malformed"),
    ],
)
def test_errors_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("*", r"\*")):
        parse_config(text)


def test_every_key_has_a_default_that_validates():
    cfg = parse_config("")
    for section, keys in SCHEMA.items():
        for key in keys:
            assert key in cfg[section]


def test_set_validates():
    cfg = parse_config("")
    cfg.set("run", "seed", "0x10")
    assert cfg.seed == 16
    with pytest.raises(ConfigError):
        cfg.set("run", "threads", "0")


@settings(max_examples=50, deadline=None)
@given(
    rho=st.floats(0.01, 5.0),
    xi=st.floats(0.0, 3.0),
    seed=st.integers(0, 2**64 - 1),
    gsi=st.lists(st.floats(0.2, 10.0), min_size=1, max_size=4),
)
def test_round_trip_property(rho, xi, seed, gsi):
    text = (
        f"[run]\nseed = {seed}\n[model]\nrho = {rho!r}\nxi_noise = {xi!r}\n"
        f"[sweep]\ngamma_s_inv = {', '.join(repr(g) for g in gsi)}\n"
    )
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again.values == cfg.values
