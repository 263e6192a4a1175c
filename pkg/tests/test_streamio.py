import io

import pytest
from hypothesis import given, settings, strategies as st

from hivetrack.exceptions import FormatError, InvalidInputError
from hivetrack.evaluation import CountPair, PollenVideoCounts, VideoCounts
from hivetrack.geometry import DetectionBox
from hivetrack.simulator import SimConfig, generate
from hivetrack.streamio import (GroundTruthRecord, SecondaryClass, SecondaryDetection,
                                parse_count_table, parse_detection_stream,
                                parse_ground_truth, parse_pollen_table, parse_secondary,
                                parse_track_log, read_detection_stream,
                                write_count_table, write_detection_stream,
                                write_ground_truth, write_pollen_table, write_secondary,
                                write_track_log)
from hivetrack.tracker import FrameDetections, TrackStatus, track


def dump(writer, items):
    buf = io.BytesIO()
    writer(items, buf)
    return buf.getvalue()


# -- detection streams --------------------------------------------------------

def test_detection_stream_roundtrip(tmp_path):
    frames, _ = generate(SimConfig(seed=3, jitter_px=2.0))
    data = dump(write_detection_stream, frames)
    assert list(parse_detection_stream(data)) == frames
    path = tmp_path / "d.jsonl"
    path.write_bytes(data)
    assert read_detection_stream(path) == frames


def test_detection_stream_text_sink():
    frames = [FrameDetections(0, (DetectionBox(1, 2, 3, 4, 0.5),))]
    buf = io.StringIO()
    write_detection_stream(frames, buf)
    assert buf.getvalue() == '{"frame": 0, "boxes": [[1.0, 2.0, 3.0, 4.0, 0.5]]}\n'


def test_detection_stream_empty_input():
    assert list(parse_detection_stream(b"")) == []
    assert list(parse_detection_stream(b"\n\n")) == []


def test_detection_stream_frames_may_skip():
    data = b'{"frame": 0, "boxes": []}\n{"frame": 7, "boxes": []}\n'
    assert [f.frame_index for f in parse_detection_stream(data)] == [0, 7]


def test_detection_stream_inverted_box_reports_line():
    data = (b'{"frame": 0, "boxes": []}\n'
            b'{"frame": 1, "boxes": [[50, 10, 40, 20, 0.9]]}\n')
    with pytest.raises(FormatError) as info:
        list(parse_detection_stream(data))
    assert info.value.line == 2
    assert "line 2" in str(info.value)


@pytest.mark.parametrize("payload", [
    b'{"frame": 1, "boxes": []}\n{"frame": 1, "boxes": []}\n',
    b'{"frame": -1, "boxes": []}\n',
    b'{"frame": 1.5, "boxes": []}\n',
    b'{"frame": true, "boxes": []}\n',
    b'{"frame": 0}\n',
    b'{"frame": 0, "boxes": {}}\n',
    b'{"frame": 0, "boxes": [[1, 2, 3]]}\n',
    b'{"frame": 0, "boxes": [[1, 2, 3, 4, 1.5]]}\n',
    b'{"frame": 0, "boxes": [[NaN, 2, 3, 4, 0.5]]}\n',
    b'{"frame": 0, "boxes": [["a", 2, 3, 4, 0.5]]}\n',
    b'[1, 2]\n',
    b'{"frame": 0, "boxes": [\n',
    b'\xff\xfe\n',
])
def test_detection_stream_rejects(payload):
    with pytest.raises(FormatError):
        list(parse_detection_stream(payload))


def test_detection_stream_rejects_str_source():
    with pytest.raises(TypeError):
        list(parse_detection_stream('{"frame": 0, "boxes": []}'))


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_detection_stream_fuzz_only_format_errors(data):
    try:
        list(parse_detection_stream(data))
    except FormatError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.recursive(st.none() | st.booleans() | st.integers() | st.floats() | st.text(max_size=5),
                    lambda kids: st.lists(kids, max_size=5)
                    | st.dictionaries(st.sampled_from(["frame", "boxes", "x"]), kids, max_size=3),
                    max_leaves=20))
def test_detection_stream_fuzz_json_values(value):
    import json
    line = json.dumps({"frame": 0, "boxes": value}).encode() + b"\n"
    try:
        list(parse_detection_stream(line))
    except FormatError:
        pass


# -- secondary detections -----------------------------------------------------

def test_secondary_roundtrip():
    dets = [
        SecondaryDetection((1, 4), SecondaryClass.POLLEN, 0.8, DetectionBox(1, 1, 5, 5, 1.0)),
        SecondaryDetection((2, 9), SecondaryClass.MITE, 0.1 + 0.2, DetectionBox(0, 0, 2.5, 3, 1.0)),
    ]
    assert parse_secondary(dump(write_secondary, dets)) == dets


def test_secondary_rejects_unknown_class():
    data = (b"profile_id,frame_index,class,confidence,min_x,min_y,max_x,max_y\n"
            b"1,4,Wasp,0.5,0,0,1,1\n")
    with pytest.raises(FormatError) as info:
        parse_secondary(data)
    assert info.value.line == 2


def test_secondary_missing_column():
    with pytest.raises(FormatError, match="confidence"):
        parse_secondary(b"profile_id,frame_index,class,min_x,min_y,max_x,max_y\n")


# -- ground truth -------------------------------------------------------------

def test_ground_truth_roundtrip():
    records = [GroundTruthRecord(1, TrackStatus.ARRIVING, 0, 20, True, False, 12.5),
               GroundTruthRecord(2, TrackStatus.NEW, 3, 3, False, False)]
    assert parse_ground_truth(dump(write_ground_truth, records)) == records


def test_ground_truth_without_size_column():
    data = (b"bee_id,final_status,first_frame,last_frame,has_pollen,has_mite\n"
            b"5,Leaving,2,9,0,1\n")
    [rec] = parse_ground_truth(data)
    assert rec == GroundTruthRecord(5, TrackStatus.LEAVING, 2, 9, False, True)


def test_ground_truth_duplicate_id():
    data = (b"bee_id,final_status,first_frame,last_frame,has_pollen,has_mite\n"
            b"1,Deck,0,1,0,0\n1,Deck,0,1,0,0\n")
    with pytest.raises(FormatError, match="duplicate") as info:
        parse_ground_truth(data)
    assert info.value.line == 3


@pytest.mark.parametrize("row", [b"1,Hovering,0,1,0,0", b"1,Deck,5,1,0,0",
                                 b"1,Deck,0,1,maybe,0", b"x,Deck,0,1,0,0", b"1,Deck,0,1,0"])
def test_ground_truth_bad_rows(row):
    with pytest.raises(FormatError):
        parse_ground_truth(b"bee_id,final_status,first_frame,last_frame,has_pollen,has_mite\n"
                           + row + b"\n")


def test_ground_truth_record_validates_span():
    with pytest.raises(InvalidInputError):
        GroundTruthRecord(1, TrackStatus.DECK, 5, 2, False, False)


# -- track logs ---------------------------------------------------------------

def test_track_log_roundtrip_exact():
    frames, _ = generate(SimConfig(seed=8, jitter_px=2.5, dropout_prob=0.03))
    profiles = track(frames)
    assert any(p.snapshots for p in profiles)
    assert parse_track_log(dump(write_track_log, profiles)) == profiles


def test_track_log_empty():
    assert parse_track_log(b"") == []
    assert parse_track_log(dump(write_track_log, [])) == []


def test_track_log_bad_snapshot():
    header = b"id,status,first_frame,last_frame,last_x,last_y,size_mm,snapshots\n"
    with pytest.raises(FormatError):
        parse_track_log(header + b"1,Deck,0,3,1.0,2.0,,3:Sideways:0:0:1:1:0.5\n")
    with pytest.raises(FormatError):
        parse_track_log(header + b"1,Deck,0,3,1.0,2.0,,3:None:0:0:1:1:0.5\n")


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200))
def test_tables_fuzz_only_format_errors(data):
    for parser in (parse_track_log, parse_ground_truth, parse_secondary,
                   parse_count_table, parse_pollen_table):
        try:
            parser(data)
        except FormatError:
            pass


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet="0123456789.,-:;ArivngDckLeNw\"", max_size=30), max_size=4))
def test_track_log_fuzz_rows(rows):
    data = ("id,status,first_frame,last_frame,last_x,last_y,size_mm,snapshots\n"
            + "\n".join(rows)).encode()
    try:
        parse_track_log(data)
    except FormatError:
        pass


# -- evaluation tables --------------------------------------------------------

def test_count_table_roundtrip():
    videos = [VideoCounts("1", CountPair(17, 17), CountPair(19, 19)),
              VideoCounts("b", CountPair(0, 3), CountPair(4, 2))]
    assert parse_count_table(dump(write_count_table, videos)) == videos


def test_pollen_table_roundtrip():
    videos = [PollenVideoCounts(23, 22, 3, 4, 325, "1"), PollenVideoCounts(0, 0, 0, 0, 0, "2")]
    assert parse_pollen_table(dump(write_pollen_table, videos)) == videos


def test_count_table_rejects_negative():
    data = b"video,arriving_manual,arriving_algorithm,leaving_manual,leaving_algorithm\n1,-1,0,0,0\n"
    with pytest.raises(FormatError):
        parse_count_table(data)
