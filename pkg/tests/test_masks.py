import json
import struct

import numpy as np
import pytest

from segbias.errors import FormatError, ValidationError
from segbias.masks import (
    EPSILON,
    BinaryMask,
    ProbMap,
    load_intensity,
    load_mask,
    load_probmap,
    save_intensity,
    save_mask,
    save_probmap,
)


def write_pgm(path, header: bytes, payload: bytes):
    path.write_bytes(header + payload)


class TestBinaryMask:
    def test_flat_data_is_reshaped(self):
        mask = BinaryMask(width=2, height=2, data=[False, True, False, True])
        assert mask.data.shape == (2, 2)
        assert mask.foreground_count() == 2

    def test_zero_size_rejected(self):
        with pytest.raises(ValidationError):
            BinaryMask(width=0, height=1, data=[])
        with pytest.raises(ValidationError):
            BinaryMask(width=1, height=0, data=[])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            BinaryMask(width=2, height=2, data=[True, False, True])

    def test_data_is_immutable(self):
        mask = BinaryMask.from_array(np.zeros((2, 2), dtype=bool))
        with pytest.raises(ValueError):
            mask.data[0, 0] = True

    def test_equality(self):
        a = BinaryMask.from_array(np.eye(3, dtype=bool))
        b = BinaryMask.from_array(np.eye(3, dtype=bool))
        c = BinaryMask.from_array(np.zeros((3, 3), dtype=bool))
        assert a == b
        assert a != c


class TestPgmIO:
    def test_decode_2x2(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n2 2\n255\n", bytes([0, 255, 0, 255]))
        mask = load_mask(p)
        assert mask.width == 2 and mask.height == 2
        assert mask.data.ravel().tolist() == [False, True, False, True]

    def test_nonzero_is_foreground(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n1 1\n255\n", bytes([7]))
        assert load_mask(p).data[0, 0]

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n4 4\n255\n", bytes(15))
        with pytest.raises(FormatError, match="truncated payload"):
            load_mask(p)

    def test_bad_magic_names_offset(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P6\n1 1\n255\n", bytes([0]))
        with pytest.raises(FormatError, match="byte 0"):
            load_mask(p)

    def test_unsupported_maxval(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n1 1\n65535\n", bytes([0, 0]))
        with pytest.raises(FormatError, match="unsupported maxval 65535"):
            load_mask(p)

    def test_non_numeric_header(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\ntwo 2\n255\n", bytes([0, 0, 0, 0]))
        with pytest.raises(FormatError, match="expected width"):
            load_mask(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n1 1\n255\n", bytes([0, 9]))
        with pytest.raises(FormatError, match="trailing data"):
            load_mask(p)

    def test_comments_in_header(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n# made by hand\n2 1\n255\n", bytes([255, 0]))
        assert load_mask(p).data.ravel().tolist() == [True, False]

    def test_save_payload_bytes(self, tmp_path):
        p = tmp_path / "m.pgm"
        save_mask(BinaryMask(width=2, height=1, data=[True, False]), p)
        assert p.read_bytes() == b"P5\n2 1\n255\n" + bytes([255, 0])

    def test_roundtrip_random_masks(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(20):
            h, w = rng.integers(1, 20, size=2)
            mask = BinaryMask.from_array(rng.random((h, w)) < 0.4)
            p = tmp_path / f"m{i}.pgm"
            save_mask(mask, p)
            assert load_mask(p) == mask

    def test_foreground_count_matches_nonzero_payload(self, tmp_path):
        rng = np.random.default_rng(1)
        payload = bytes(int(v) for v in rng.integers(0, 256, size=12))
        p = tmp_path / "m.pgm"
        write_pgm(p, b"P5\n4 3\n255\n", payload)
        assert load_mask(p).foreground_count() == sum(1 for b in payload if b)


class TestProbMap:
    def test_values_clamped_on_construction(self):
        pm = ProbMap(width=2, height=1, data=[0.0, 1.0])
        assert pm.data[0, 0] == EPSILON
        assert pm.data[0, 1] == 1.0 - EPSILON

    def test_out_of_range_rejected_with_pixel_index(self):
        with pytest.raises(ValidationError, match="pixel 2"):
            ProbMap(width=3, height=1, data=[0.5, 0.5, -0.1])

    def test_nan_rejected(self):
        with pytest.raises(ValidationError, match="pixel 0"):
            ProbMap(width=1, height=1, data=[float("nan")])


class TestProbMapIO:
    def test_decode(self, tmp_path):
        payload = struct.pack("<2f", 0.5, 0.25)
        (tmp_path / "p.f32").write_bytes(payload)
        (tmp_path / "p.json").write_text('{"width":2,"height":1}')
        pm = load_probmap(tmp_path / "p.f32")
        assert pm.data.ravel().tolist() == [0.5, 0.25]

    def test_clamp_on_load(self, tmp_path):
        (tmp_path / "p.f32").write_bytes(struct.pack("<1f", 1.0))
        (tmp_path / "p.json").write_text('{"width":1,"height":1}')
        assert load_probmap(tmp_path / "p.f32").data[0, 0] == 1.0 - EPSILON

    def test_out_of_range_reports_pixel(self, tmp_path):
        (tmp_path / "p.f32").write_bytes(struct.pack("<2f", -0.1, 0.5))
        (tmp_path / "p.json").write_text('{"width":2,"height":1}')
        with pytest.raises(FormatError, match="pixel 0"):
            load_probmap(tmp_path / "p.f32")

    def test_size_mismatch(self, tmp_path):
        (tmp_path / "p.f32").write_bytes(struct.pack("<3f", 0.5, 0.5, 0.5))
        (tmp_path / "p.json").write_text('{"width":2,"height":1}')
        with pytest.raises(FormatError, match="sidecar implies 8"):
            load_probmap(tmp_path / "p.f32")

    def test_sidecar_extra_keys_rejected(self, tmp_path):
        (tmp_path / "p.f32").write_bytes(struct.pack("<1f", 0.5))
        (tmp_path / "p.json").write_text('{"width":1,"height":1,"depth":1}')
        with pytest.raises(FormatError, match="exactly the keys"):
            load_probmap(tmp_path / "p.f32")

    def test_roundtrip_within_one_f32_ulp(self, tmp_path):
        rng = np.random.default_rng(2)
        values = rng.uniform(2 * EPSILON, 1.0 - 2 * EPSILON, size=(5, 7))
        pm = ProbMap.from_array(values)
        save_probmap(pm, tmp_path / "p.f32")
        loaded = load_probmap(tmp_path / "p.f32")
        f32 = pm.data.astype(np.float32)
        ulp = np.spacing(f32)
        assert (np.abs(loaded.data - pm.data) <= ulp).all()

    def test_save_load_save_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        pm = ProbMap.from_array(rng.uniform(0.01, 0.99, size=(4, 4)))
        save_probmap(pm, tmp_path / "a.f32")
        save_probmap(load_probmap(tmp_path / "a.f32"), tmp_path / "b.f32")
        assert (tmp_path / "a.f32").read_bytes() == (tmp_path / "b.f32").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestIntensityIO:
    def test_roundtrip_without_clamping(self, tmp_path):
        values = np.array([[0.0, 1.0], [0.25, 0.75]])
        save_intensity(values, tmp_path / "i.f32")
        loaded = load_intensity(tmp_path / "i.f32")
        assert loaded[0, 0] == 0.0 and loaded[0, 1] == 1.0

    def test_rejects_out_of_range(self, tmp_path):
        with pytest.raises(ValidationError):
            save_intensity(np.array([[1.5]]), tmp_path / "i.f32")
