"""Tests for file formats: curve CSV, config, scenarios, writers."""

import json

import pytest

from fair_engine.allocation import optimal_allocation
from fair_engine.curves import lower_envelope
from fair_engine.fileio import (
    ExperimentConfig,
    ParseError,
    allocation_rows,
    envelope_rows,
    parse_position_rows,
    parse_seller_rows,
    read_experiment_config,
    read_scenario,
    read_sellers_csv,
    rows_to_text,
    write_shipping_plan,
)

CURVES_CSV = """\
A,linear,100,2,60,5,0,0
B,tabular,1|10|30|60,4.69|4.19|3.69|3.09,unlimited,3,4
C,linear,80,1.5,40
"""


@pytest.fixture
def curves_file(tmp_path):
    path = tmp_path / "curves.csv"
    path.write_text(CURVES_CSV, encoding="utf-8")
    return str(path)


class TestSellerCsv:
    def test_parses_linear_and_tabular_rows(self, curves_file):
        sellers = {s.id: s for s in read_sellers_csv(curves_file)}
        assert sellers["A"].availability == 5
        assert sellers["A"].curve.price_at(11) == 8000
        assert sellers["B"].availability is None
        assert sellers["B"].curve.price_at(10) == 419
        assert (sellers["B"].position.x, sellers["B"].position.y) == (3.0, 4.0)
        assert sellers["C"].availability is None
        assert sellers["C"].curve.price_at(3) == 7700  # 80 - 1.5*2

    def test_comments_and_blank_lines_are_skipped(self):
        rows = [["# header"], [], ["A", "linear", "10", "1", "5"]]
        sellers = parse_seller_rows(rows)
        assert [s.id for s in sellers] == ["A"]

    def test_error_carries_line_number(self):
        rows = [["A", "linear", "10", "1", "5"], ["B", "linear", "10", "1"]]
        with pytest.raises(ParseError) as err:
            parse_seller_rows(rows, source="x.csv")
        assert err.value.line == 2
        assert "x.csv:2" in str(err.value)

    def test_rejects_unknown_form(self):
        with pytest.raises(ParseError):
            parse_seller_rows([["A", "spline", "1", "2", "3"]])

    def test_rejects_mismatched_band_lists(self):
        with pytest.raises(ParseError):
            parse_seller_rows([["A", "tabular", "1|10", "4.69"]])

    def test_rejects_duplicate_ids(self):
        rows = [["A", "linear", "10", "1", "5"], ["A", "linear", "11", "1", "5"]]
        with pytest.raises(ParseError):
            parse_seller_rows(rows)

    def test_rejects_empty_file(self):
        with pytest.raises(ParseError):
            parse_seller_rows([])

    def test_rejects_bad_availability(self):
        with pytest.raises(ParseError):
            parse_seller_rows([["A", "linear", "10", "1", "5", "-3"]])


class TestPositionsCsv:
    def test_groups_visits_per_buyer_sorted_by_time(self):
        rows = [
            ["b2", "1.0", "2.0", "50"],
            ["b1", "0.0", "0.0", "10"],
            ["# note"],
            ["b1", "3.0", "4.0", "5"],
        ]
        histories = parse_position_rows(rows)
        assert [h.buyer_id for h in histories] == ["b1", "b2"]
        assert [t for _, t in histories[0].visits] == [5.0, 10.0]
        assert histories[0].visits[0][0].x == 3.0

    def test_rejects_short_rows(self):
        with pytest.raises(ParseError) as err:
            parse_position_rows([["b1", "0.0", "0.0"]])
        assert err.value.line == 1

    def test_rejects_bad_numbers(self):
        with pytest.raises(ParseError):
            parse_position_rows([["b1", "x", "0.0", "1"]])


class TestShippingPlanOutput:
    def test_plan_csv_carries_coordinate_note_and_total(self):
        import io

        from fair_engine.geo import Position
        from fair_engine.curves import linear_curve
        from fair_engine.allocation import Seller
        from fair_engine.geo import shipping_plan

        seller = Seller("S1", linear_curve(10, 0, 10), position=Position(0, 0))
        alloc = optimal_allocation([seller], 2)
        plan = shipping_plan(alloc, [seller], [("b1", 2)], {"b1": Position(10, 0)})
        buf = io.StringIO()
        write_shipping_plan(plan, buf)
        text = buf.getvalue()
        assert text.startswith("# coordinates=planar-km\n# total_cost=6.00\n")
        assert "S1,10.000,0.000,2,10.000,6.00" in text


class TestWriters:
    def test_envelope_rows_round_to_cu_strings(self):
        from fair_engine.curves import linear_curve

        env = lower_envelope([("A", linear_curve(100, 5, 70))], 3)
        header, rows = envelope_rows(env)
        assert header == ["q", "seller_id", "price"]
        assert rows == [[1, "A", "100.00"], [2, "A", "95.00"], [3, "A", "90.00"]]

    def test_allocation_rows_carry_fair_price(self):
        from fair_engine.allocation import Seller
        from fair_engine.curves import linear_curve

        sellers = [
            Seller("A", linear_curve(10, 1, 8), availability=2),
            Seller("B", linear_curve(12, 1, 9), availability=2),
        ]
        alloc = optimal_allocation(sellers, 3)
        header, rows = allocation_rows(alloc)
        assert rows == [
            [3, "A", 2, "9.00", "10.0000"],
            [3, "B", 1, "12.00", "10.0000"],
        ]

    def test_csv_and_json_formats(self):
        header = ["a", "b"]
        rows = [[1, "x"], [2, "y"]]
        csv_text = rows_to_text(header, rows, fmt="csv", comments=["note"])
        assert csv_text == "# note\na,b\n1,x\n2,y\n"
        payload = json.loads(rows_to_text(header, rows, fmt="json"))
        assert payload["rows"] == [{"a": 1, "b": "x"}, {"a": 2, "b": "y"}]

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            rows_to_text(["a"], [[1]], fmt="xml")


class TestExperimentConfig:
    def test_parses_keys_and_availability_list(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# experiment\nn_sellers = 20\nseed = 42\n"
            "availabilities = 10, 46, unlimited\nq_max = 120\nmethod = exact\n",
            encoding="utf-8",
        )
        config = read_experiment_config(str(path))
        assert config == ExperimentConfig(
            n_sellers=20,
            seed=42,
            availabilities=(10, 46, None),
            q_max=120,
            method="exact",
        )

    def test_defaults_apply(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seed = 9\n", encoding="utf-8")
        config = read_experiment_config(str(path))
        assert config.n_sellers == 20 and config.q_max == 200
        assert config.availabilities == (None,)

    def test_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("sellers = 3\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_experiment_config(str(path))

    def test_rejects_missing_equals(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seed 9\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_experiment_config(str(path))

    def test_rejects_bad_method(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("method = magic\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_experiment_config(str(path))


SCENARIO = {
    "product_id": "paper",
    "opened_at": 0.0,
    "config": {"max_duration": 86400, "margin": "0.05", "fidelity_discount": "0.04"},
    "sellers": [
        {"id": "A", "form": "linear", "p1": 100, "rate": 10, "sat": 10, "availability": 5},
        {"id": "B", "form": "linear", "p1": 200, "rate": 0, "sat": 200},
    ],
    "events": [
        {"at": 10, "action": "join", "buyer_id": "b1", "quantity": 2, "max_wait": 864000},
        {
            "at": 20,
            "action": "join",
            "buyer_id": "b2",
            "quantity": 3,
            "max_wait": 864000,
            "payment_timing": "before",
            "history": {"purchases": 10, "payment_timing": "on_delivery",
                        "social_actions": 25, "join_earliness": 0.5},
        },
        {"at": 500, "action": "advance"},
    ],
}


class TestScenario:
    def test_parses_full_scenario(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(SCENARIO), encoding="utf-8")
        scenario = read_scenario(str(path))
        assert scenario.product_id == "paper"
        assert [s.id for s in scenario.sellers] == ["A", "B"]
        joins = [e for e in scenario.events if e.action == "join"]
        assert joins[0].order.quantity == 2
        assert joins[1].order.fidelity == 0.5  # from the history block
        assert scenario.events[-1].action == "advance"

    def test_rejects_invalid_json(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text("{nope", encoding="utf-8")
        with pytest.raises(ParseError):
            read_scenario(str(path))

    def test_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps({"product_id": "x"}), encoding="utf-8")
        with pytest.raises(ParseError):
            read_scenario(str(path))

    def test_rejects_decreasing_timestamps(self, tmp_path):
        bad = dict(SCENARIO)
        bad["events"] = [
            {"at": 20, "action": "advance"},
            {"at": 10, "action": "advance"},
        ]
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(bad), encoding="utf-8")
        with pytest.raises(ParseError):
            read_scenario(str(path))

    def test_rejects_unknown_action(self, tmp_path):
        bad = dict(SCENARIO)
        bad["events"] = [{"at": 10, "action": "dance"}]
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(bad), encoding="utf-8")
        with pytest.raises(ParseError):
            read_scenario(str(path))
