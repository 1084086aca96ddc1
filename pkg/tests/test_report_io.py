"""
Unit Tests for report_io and transport_utils
=============================================

Input files, JSON reports, the CSV mirror and weight parsing.
"""
import csv
import pytest
from fractions import Fraction

import numpy as np
import orjson

from modules.instances import anticipation_instance
from modules.report_io import (
    check_rows,
    dumps,
    load_cost,
    load_coupling,
    load_endpoint_marginals,
    load_measure,
    load_model,
    measure_to_dict,
    read_json,
    solution_to_dict,
    split_report,
    write_csv,
    write_report,
)
from modules.transport_base import ArithmeticMode, ValidationError
from modules.transport_solver import solve_causal_mk
from modules.transport_utils import format_count, format_float, parse_weight, to_jsonable


class TestParsing:
    """Tests for parse_weight and to_jsonable"""

    @pytest.mark.parametrize("raw,expected", [
        (1, Fraction(1)),
        ("1/3", Fraction(1, 3)),
        ("0.25", Fraction(1, 4)),
        (Fraction(2, 7), Fraction(2, 7)),
        ("inf", float('inf')),
    ])
    def test_rational_inputs(self, raw, expected):
        """Integers and strings stay exact"""
        assert parse_weight(raw) == expected

    def test_float_stays_float(self):
        """Floats switch a file to float mode"""
        value = parse_weight(0.1)
        assert isinstance(value, float)

    def test_numpy_scalars(self):
        """numpy floats become python floats, numpy ints stay exact"""
        value = parse_weight(np.float32(0.25))
        assert isinstance(value, float) and value == 0.25
        assert type(parse_weight(np.float64(0.5))) is float
        assert parse_weight(np.int64(3)) == Fraction(3)
        assert isinstance(parse_weight(np.int64(3)), Fraction)
        with pytest.raises(ValidationError, match="boolean"):
            parse_weight(np.bool_(True))

    @pytest.mark.parametrize("raw", [True, "one third", "1/0", None])
    def test_rejects(self, raw):
        """Booleans, words and zero denominators name the source"""
        with pytest.raises(ValidationError, match="eta.json"):
            parse_weight(raw, 'eta.json')

    def test_to_jsonable(self):
        """Fractions as p/q, infinities as strings"""
        assert to_jsonable(Fraction(1, 3)) == "1/3"
        assert to_jsonable(Fraction(4, 2)) == "2"
        assert to_jsonable(float('inf')) == "inf"
        assert to_jsonable(np.array([Fraction(1, 2), Fraction(1)], dtype=object)) == ["1/2", "1"]
        assert to_jsonable({1: np.float64(0.5)}) == {'1': 0.5}

    def test_formatting(self):
        """Round-trip floats and compact counts"""
        assert float(format_float(0.1)) == 0.1
        assert format_float(Fraction(1, 3)) == format(1 / 3, '.17g')
        assert format_count(1500) == "1.5K"
        assert format_count(2_000_000) == "2.0M"


class TestReading:
    """Tests for the input loaders"""

    def test_load_measure(self, write_json):
        """Rational weights give an exact measure"""
        path = write_json('eta.json', {'steps': 2, 'alphabets': [2, 2], 'weights': ["1/4"] * 4})
        eta = load_measure(path)
        assert eta.mode is ArithmeticMode.EXACT
        assert eta[(1, 1)] == Fraction(1, 4)

    def test_measure_round_trip(self, write_json, skewed_binary):
        """measure_to_dict is readable by load_measure"""
        path = write_json('eta.json', to_jsonable(measure_to_dict(skewed_binary)))
        assert load_measure(path) == skewed_binary

    def test_missing_weights(self, write_json):
        """Measures need weights"""
        path = write_json('eta.json', {'alphabets': [2]})
        with pytest.raises(ValidationError, match="eta.json"):
            load_measure(path)

    def test_invalid_json(self, tmp_path):
        """Unreadable files name themselves"""
        path = tmp_path / 'broken.json'
        path.write_text('{"alphabets": [2')
        with pytest.raises(ValidationError, match="broken.json"):
            read_json(path)
        with pytest.raises(ValidationError, match="not found"):
            read_json(tmp_path / 'missing.json')

    def test_load_coupling_with_references(self, write_json):
        """Spaces may be inline or references to other files"""
        write_json('space.json', {'alphabets': [2]})
        path = write_json('gamma.json', {
            'first': 'space.json',
            'second': {'alphabets': [2]},
            'weights': [["1/2", 0], [0, "1/2"]],
        })
        gamma = load_coupling(path)
        assert gamma.first_space.n_paths == 2
        assert gamma.weights[0, 0] == Fraction(1, 2)

    def test_load_cost(self, write_json, binary_space):
        """Cost entries may be p/q or inf"""
        path = write_json('cost.json', {'cost': [[0, "1/2", "inf", 1]] * 4})
        cost = load_cost(path, binary_space, binary_space)
        assert cost[0, 1] == Fraction(1, 2)
        assert cost[0, 2] == float('inf')

    def test_cost_shape(self, write_json, binary_space):
        """Row and column counts are checked"""
        path = write_json('cost.json', [[0, 1]] * 4)
        with pytest.raises(ValidationError, match="cost row 0"):
            load_cost(path, binary_space, binary_space)

    def test_load_model(self, write_json):
        """Model files carry N and d"""
        model = load_model(write_json('model.json', {'N': 50, 'd': 2}))
        assert model.n_steps == 50 and model.dim == 2

    def test_load_endpoint_marginals(self, write_json):
        """Q1 file plus an optional Q0 file"""
        q1 = write_json('q1.json', {'points': [-1.0, 1.0], 'weights': [0.5, 0.5]})
        q0 = write_json('q0.json', {'points': [[0.0], [1.0]], 'weights': [0.5, 0.5]})
        marginals = load_endpoint_marginals(q1, q0)
        assert marginals.dim == 1
        assert len(marginals.q0_weights) == 2


class TestWriting:
    """Tests for the report writers"""

    def test_dumps_is_canonical(self):
        """Sorted keys and exact values: equal payloads give equal bytes"""
        first = dumps({'b': Fraction(1, 3), 'a': [0.5, 1.0]})
        second = dumps({'a': [0.5, 1.0], 'b': "1/3"})
        assert first == second
        assert orjson.loads(dumps({'a': np.array([0.5, 1.0])})) == {'a': [0.5, 1.0]}

    def test_report_and_timings(self, tmp_path):
        """Timings go to a sidecar next to the report"""
        report, csv_path, timings = split_report(tmp_path / 'out' / 'report.json')
        write_report(report, {'value': 1}, {'solve': 0.25})

        assert csv_path.name == 'report.csv'
        assert orjson.loads(report.read_bytes()) == {'value': 1}
        assert orjson.loads(timings.read_bytes()) == {'solve': 0.25}

    def test_csv_mirror(self, tmp_path):
        """17 significant digits, lowercase booleans, empty None"""
        rows = check_rows('gaussian', [
            {'name': 'entropy', 'estimate': 0.1, 'pass': True, 'oracle': None, 'details': {'x': 1}},
        ])
        path = write_csv(tmp_path / 'report.csv', rows)
        with open(path, newline='') as f:
            table = list(csv.DictReader(f))

        assert table == [{'estimate': '0.10000000000000001', 'name': 'entropy', 'oracle': '',
                          'pass': 'true', 'section': 'gaussian'}]

    def test_solution_to_dict(self):
        """Exact solutions keep p/q values alongside floats"""
        inst = anticipation_instance()
        data = to_jsonable(solution_to_dict(solve_causal_mk(inst.eta, inst.nu, inst.cost, exact=True)))
        assert data['value'] == "1/2"
        assert data['value_float'] == 0.5
        assert data['status'] == 'optimal'
        assert data['mode'] == 'exact'
        assert len(data['dual']['causality_multipliers']) == 2
