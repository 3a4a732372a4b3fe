import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vulnfuzz.acfg import (
    Acfg, AcfgFormatError, BasicBlockNode, ProgramAcfg, DEFAULT_DIMENSION,
    default_schema, parse, predecessors, serialize, validate,
)
from conftest import random_acfg


def zeros(n=DEFAULT_DIMENSION):
    return tuple(0.0 for _ in range(n))


class TestSchema:
    def test_default_layout(self):
        s = default_schema()
        assert s.dimension == 255
        assert sum(1 for n in s.names if n.startswith("insn_")) == 244
        assert sum(1 for n in s.names if n.startswith("op_")) == 8
        assert sum(1 for n in s.names if n.startswith("str_")) == 3
        # Ordering: instructions, then operands, then strings.
        assert s.names[244:252] == tuple(n for n in s.names if n.startswith("op_"))
        assert s.names[252:] == ("str_malloc", "str_calloc", "str_free")

    def test_duplicate_names_rejected(self):
        from vulnfuzz.acfg import AttributeSchema
        with pytest.raises(ValueError):
            AttributeSchema(("a", "a"))


class TestValidate:
    def test_minimal_ok(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros()),), ())
        assert validate(g) == []

    def test_missing_edge_target(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros()),), ((0, 7),))
        assert any("edge target missing" in v for v in validate(g))

    def test_attr_width_mismatch(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros(254)),), ())
        assert any("attribute width mismatch" in v for v in validate(g))

    def test_duplicate_block(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros()),
                          BasicBlockNode(0, zeros())), ())
        assert any("duplicate block" in v for v in validate(g))

    def test_duplicate_edge_and_self_loop(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros()),), ((0, 0), (0, 0)))
        vs = validate(g)
        assert any("duplicate edge" in v for v in vs)
        # Self-loop itself is legal.
        g2 = Acfg("f", 0, (BasicBlockNode(0, zeros()),), ((0, 0),))
        assert validate(g2) == []

    def test_negative_and_nonfinite(self):
        bad = list(zeros())
        bad[3] = -1.0
        bad[5] = float("nan")
        g = Acfg("f", 0, (BasicBlockNode(0, tuple(bad)),), ())
        vs = validate(g)
        assert any("negative" in v for v in vs)
        assert any("not finite" in v for v in vs)

    def test_total_on_garbage(self):
        g = Acfg("f", 99, (), ((1, 2),))
        assert validate(g)  # violations, not exceptions


class TestPredecessors:
    def test_fig6_shape(self):
        g = Acfg("f", 1, tuple(BasicBlockNode(i, zeros(2)) for i in (1, 2, 3, 4)),
                 ((1, 2), (1, 3), (2, 4)))
        assert predecessors(g, 4) == {2}

    def test_entry_no_inputs(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros(2)),), ())
        assert predecessors(g, 0) == set()

    def test_diamond(self):
        g = Acfg("f", 1, tuple(BasicBlockNode(i, zeros(2)) for i in (1, 2, 3, 4)),
                 ((1, 2), (1, 3), (2, 4), (3, 4)))
        assert predecessors(g, 4) == {2, 3}

    def test_unknown_block(self):
        g = Acfg("f", 0, (BasicBlockNode(0, zeros(2)),), ())
        with pytest.raises(KeyError):
            predecessors(g, 42)

    def test_consistent_with_edges(self, rng):
        g = random_acfg(rng, 6, 3)
        for v in range(6):
            assert predecessors(g, v) == {u for (u, w) in g.edges if w == v}


class TestSerialization:
    def test_empty_functions(self):
        p = parse('{"program": "x", "schema_dim": 4, "functions": []}')
        assert p.functions == ()

    def test_truncated(self):
        with pytest.raises(AcfgFormatError) as e:
            parse('{"program": "x", "schema_dim"')
        assert "line" in str(e.value)

    def test_unknown_field_rejected(self):
        with pytest.raises(AcfgFormatError):
            parse('{"program": "x", "schema_dim": 4, "functions": [], "bogus": 1}')

    def test_missing_field(self):
        with pytest.raises(AcfgFormatError):
            parse('{"program": "x", "functions": []}')

    def test_width_mismatch_positioned(self):
        doc = ('{"program":"x","schema_dim":3,"functions":'
               '[{"name":"f","entry":0,"blocks":[{"id":0,"attrs":[1,2]}],"edges":[]}]}')
        with pytest.raises(AcfgFormatError) as e:
            parse(doc)
        assert "functions[0]" in str(e.value)

    def test_duplicate_function_names(self):
        f = '{"name":"f","entry":0,"blocks":[{"id":0,"attrs":[0]}],"edges":[]}'
        with pytest.raises(AcfgFormatError):
            parse(f'{{"program":"x","schema_dim":1,"functions":[{f},{f}]}}')

    def test_two_function_round_trip(self, rng):
        p = ProgramAcfg("prog", (random_acfg(rng, 3, 5, name="a"),
                                 random_acfg(rng, 5, 5, name="b")), 5)
        assert parse(serialize(p)) == p

    @given(st.data())
    @settings(max_examples=100, deadline=None)
    def test_round_trip_property(self, data):
        seed = data.draw(st.integers(0, 2**32 - 1))
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(1, 8))
        fns = tuple(random_acfg(rng, int(rng.integers(1, 6)), dim,
                                name=f"fn{i}")
                    for i in range(int(rng.integers(0, 4))))
        p = ProgramAcfg("prog", fns, dim)
        assert parse(serialize(p)) == p
