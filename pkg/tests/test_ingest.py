import pytest

from fotval.errors import IngestionError
from fotval.ingest import ingest_event_log_csv, ingest_traffic_csv


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_traffic_single_row(tmp_path):
    p = _write(tmp_path, "t.csv", "M_km_per_year,A_events_per_year,source\n7.3e11,5e5,stats 2023\n")
    s = ingest_traffic_csv(p)
    assert (s.total_distance_M, s.event_count_A) == (7.3e11, 5e5)
    assert "t.csv:2" in s.source and "stats 2023" in s.source


def test_traffic_worst_case_across_rows(tmp_path):
    p = _write(tmp_path, "t.csv", "M_km_per_year,A_events_per_year,source\n7e11,5e5,x\n7.5e11,6e5,y\n7.2e11,4.5e5,z\n")
    s = ingest_traffic_csv(p)
    assert (s.total_distance_M, s.event_count_A) == (7.5e11, 4.5e5)
    assert "line 3" in s.source and "line 4" in s.source


def test_traffic_missing_column(tmp_path):
    p = _write(tmp_path, "t.csv", "M_km_per_year,source\n7e11,x\n")
    with pytest.raises(IngestionError, match="A_events_per_year"):
        ingest_traffic_csv(p)


@pytest.mark.parametrize("cell, needle", [("0", "must be > 0"), ("abc", "not a number"), ("1,000", "expected"), ("nan", "finite")])
def test_traffic_bad_cells_name_location(tmp_path, cell, needle):
    p = _write(tmp_path, "t.csv", f"M_km_per_year,A_events_per_year,source\n7e11,{cell},x\n")
    with pytest.raises(IngestionError) as info:
        ingest_traffic_csv(p)
    assert "t.csv:2" in str(info.value)


def test_event_log_roundtrip(tmp_path):
    p = _write(tmp_path, "log.csv", "distance_km,event\n0,0\n1.2e6,1\n3e6,0\n")
    log = ingest_event_log_csv(p)
    assert list(log.events) == [1.2e6] and log.total_distance == 3e6


def test_event_log_with_pm(tmp_path):
    p = _write(tmp_path, "log.csv", "distance_km,event,pm_value\n1,0,0.5\n2,0,\n3,1,2.5\n")
    log = ingest_event_log_csv(p)
    assert log.performance_samples.tolist() == [[1.0, 0.5], [3.0, 2.5]]


def test_nonmonotone_distance_cites_line(tmp_path):
    rows = "".join(f"{d},0\n" for d in (1, 2, 3, 4, 5, 4.5, 6))
    p = _write(tmp_path, "log.csv", "distance_km,event\n" + rows)
    with pytest.raises(IngestionError, match=r"log\.csv:7:"):
        ingest_event_log_csv(p)


@pytest.mark.parametrize(
    "text",
    ["", "distance_km,event\n", "km,event\n1,0\n", "distance_km,event\n1,2\n", "distance_km,event\n1,yes\n", "distance_km,event\n-1,0\n"],
)
def test_event_log_rejects(tmp_path, text):
    with pytest.raises(IngestionError):
        ingest_event_log_csv(_write(tmp_path, "log.csv", text))


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError, match="cannot open"):
        ingest_event_log_csv(tmp_path / "nope.csv")
