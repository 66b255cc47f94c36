import random
from pathlib import Path

import pytest

import qunique
from qunique.dsl import (
    compile_expr,
    compile_state_function,
    format_model,
    instantiate,
    iter_family_transitions,
    load_model,
    parse_certificate,
    parse_expression,
    parse_model,
)
from qunique.errors import DSLSyntaxError, ModelDefinitionError, ResourceError, UsageError
from qunique.generator import StateVec, enumerate_window, window_size
from qunique.zoo import SchloglParams, schlogl

MODELS = sorted((Path(qunique.__file__).parent / "models").glob("*.qm"))


def test_corpus_size():
    assert len(MODELS) >= 10


@pytest.mark.parametrize("path", MODELS, ids=lambda p: p.stem)
def test_corpus_round_trip(path):
    spec = parse_model(path.read_text(encoding="utf-8"))
    again = parse_model(format_model(spec))
    assert again == spec
    assert format_model(again) == format_model(spec)


def test_pure_birth_example():
    m = instantiate(parse_model("model pb\n dim 1\n trans: delta +e(0) rate x(0)+1"))
    assert m.transitions_of((9,)) == (((10,), 10.0),)


def test_schlogl_text_has_three_families():
    spec = parse_model((Path(qunique.__file__).parent / "models" / "schlogl2.qm").read_text())
    assert spec.dimension == 2 and len(spec.families) == 3
    m = instantiate(spec)
    assert sorted(m.transitions_of((0, 0))) == [((0, 1), 1.0), ((1, 0), 1.0)]


def test_comments_and_blank_lines():
    text = "# header\n\nmodel m  # trailing\ndim 1\n\ntrans: delta +e(0) rate 2\n"
    assert instantiate(parse_model(text)).transitions_of((0,)) == (((1,), 2.0),)


# ---------------------------------------------------------------------------
# diagnostics

@pytest.mark.parametrize("text, message", [
    ("model bad\n dim 1\n trans: rate 1", "missing delta clause"),
    ("model m\ndim 1\nparam a = 1\nparam a = 2\ntrans: delta +e(0) rate a", "duplicate parameter 'a'"),
    ("model m\ndim 1\ntrans: delta +e(0) rate foo", "unknown identifier 'foo'"),
    ("model m\ndim 1\ntrans: delta rate 1", "delta has no terms"),
    ("model m\ndim 1\ntrans: delta +e(3) rate 1", "out of range"),
    ("model m\ndim 1\ntrans: delta +e(0) rate x(0)^0.5", "exponent must be an integer"),
    ("model m\ndim 1\ntrans: delta +e(0) rate (x(0)", "expected"),
])
def test_syntax_errors(text, message):
    with pytest.raises(DSLSyntaxError, match=message) as info:
        parse_model(text)
    assert "line" in str(info.value) and "column" in str(info.value)


def test_syntax_error_position_and_expected_set():
    with pytest.raises(DSLSyntaxError) as info:
        parse_model("model bad\n dim 1\n trans: rate 1")
    err = info.value
    assert (err.line, err.column) == (3, 9)
    assert "'delta'" in err.expected


def test_negative_rate_cites_value():
    m = instantiate(parse_model("model m\ndim 1\ntrans: delta +e(0) rate x(0)-5"))
    with pytest.raises(ModelDefinitionError, match=r"-3.*family 0.*\(2,\)"):
        m.transitions_of((2,))


@pytest.mark.parametrize("rate, message", [("1/x(0)", "division by zero"), ("x(0)^0", "0\\^0")])
def test_evaluation_errors_fail_fast(rate, message):
    m = instantiate(parse_model(f"model m\ndim 1\ntrans: delta +e(0) rate {rate}"))
    with pytest.raises(ModelDefinitionError, match=message):
        m.transitions_of((0,))


def test_coordinate_overflow_is_resource_error():
    m = instantiate(parse_model("model m\ndim 1\ntrans: delta +e(0) rate 1"))
    with pytest.raises(ResourceError):
        m.transitions_of((2 ** 53,))


def test_zero_delta_rejected():
    with pytest.raises(ModelDefinitionError, match="zero delta"):
        instantiate(parse_model("model m\ndim 2\ntrans for u in sites, v in sites: delta -e(u) +e(v) rate 1"))


def test_negative_targets_dropped():
    m = instantiate(parse_model("model m\ndim 1\ntrans: delta -e(0) rate 1\ntrans: delta +e(0) rate 1"))
    assert m.transitions_of((0,)) == (((1,), 1.0),)


def test_param_override():
    m = load_model(Path(qunique.__file__).parent / "models" / "pure_birth_power.qm", {"p": 2, "a": 3})
    assert m.transitions_of((2,)) == (((3,), 27.0),)
    with pytest.raises(UsageError):
        load_model(Path(qunique.__file__).parent / "models" / "pure_birth_power.qm", {"zzz": 1})


# ---------------------------------------------------------------------------
# DSL Schlögl against the constructor

def _rows(model, cap):
    w = enumerate_window(model, cap)
    return {s: sorted(model.transitions_of(s)) for s in w.states}


@pytest.mark.parametrize("d, cap", [(1, 10_000 - 1), (2, 139), (3, 37)])
def test_dsl_schlogl_matches_constructor(d, cap):
    assert window_size(cap, d) <= 10_000
    dsl = load_model(Path(qunique.__file__).parent / "models" / f"schlogl{d}.qm")
    ref = schlogl(SchloglParams(sites=d))
    a, b = _rows(dsl, cap), _rows(ref, cap)
    assert a.keys() == b.keys()
    for s in a:
        assert [t for t, _ in a[s]] == [t for t, _ in b[s]], s
        assert [r for _, r in a[s]] == pytest.approx([r for _, r in b[s]], rel=1e-15), s


def test_dsl_schlogl_with_other_params():
    params = dict(beta0=0.5, beta2=2.0, delta1=3.0, delta3=0.25)
    dsl = load_model(Path(qunique.__file__).parent / "models" / "schlogl2.qm", params)
    ref = schlogl(SchloglParams(sites=2, **params))
    a, b = _rows(dsl, 40), _rows(ref, 40)
    for s in b:
        assert [t for t, _ in a[s]] == [t for t, _ in b[s]]
        assert [r for _, r in a[s]] == pytest.approx([r for _, r in b[s]], rel=1e-15)


@pytest.mark.parametrize("d, cap", [(2, 139), (3, 37)])
def test_diffusion_level_neutral(d, cap):
    m = load_model(Path(qunique.__file__).parent / "models" / f"schlogl{d}.qm")
    compiled = m.metadata["compiled_families"]
    for s in enumerate_window(m, cap).states:
        for fam, _, target, _ in iter_family_transitions(compiled, s):
            if fam == 2:
                assert sum(target) == sum(s)


def test_guard_soundness():
    text = ("model g\ndim 3\n"
            "trans for u in sites, v in sites where u != v and x(u) > 1: delta -e(u) +e(v) rate x(u)\n"
            "trans for u in sites where x(u) < 4 or u == 0: delta +e(u) rate 1\n")
    m = instantiate(parse_model(text))
    compiled = m.metadata["compiled_families"]
    guards = [compile_expr(f.guard, {}, 3) for f in m.metadata["spec"].families]
    rng = random.Random(7)
    for _ in range(300):
        s = tuple(rng.randint(0, 6) for _ in range(3))
        for fam, env, _, _ in iter_family_transitions(compiled, StateVec(s)):
            assert guards[fam](s, env)


# ---------------------------------------------------------------------------
# certificate files and expressions

def test_parse_certificate():
    spec = parse_certificate("certificate lvl\nkind uniqueness\nphi 1 + level\nc 40\nwindows 50 100 200 300\n")
    assert spec.kind == "uniqueness" and spec.c == 40 and spec.windows == (50, 100, 200, 300)


def test_sum_and_level_expressions():
    phi = compile_state_function(parse_expression("2*(1 + sum(u, x(u)^3)) + level"), 2)
    assert phi((1, 2)) == 2 * (1 + 1 + 8) + 3
