import struct
import time

import numpy as np
import pytest

from core.errors import BitstreamFormatError, TruncatedStreamError, SurplusDataError
from core.entropy import (
    QuantParams, quantize, dequantize, new_cursor, write_bits, flush_bits, read_bits,
    adapt_symbol, adapt_run, adapt_quotient, RlgrState, rlgr_encode, rlgr_decode, BitstreamHeader,
    Bitstream, serialize, deserialize, PARAM_MAX
)


def round_trip(symbols):
    symbols = np.asarray(symbols, dtype=np.int64)
    decoded = rlgr_decode(rlgr_encode(symbols), len(symbols))
    assert np.array_equal(decoded, symbols)


def sample_header(**overrides):
    fields = dict(depth=10, transform=0, block_sizes=(2,) * 10, step=16.0, predictor=1,
                  k=7, color=0, n_points=857966, channels=3)
    fields.update(overrides)
    return BitstreamHeader(**fields)


class TestQuantizer:
    def test_examples(self):
        assert quantize([0.0], 1.0).tolist() == [0]
        assert quantize([3.5, -3.5, 2.5, -2.5], 1.0).tolist() == [4, -4, 3, -3]
        assert dequantize([0], 3.0).tolist() == [0.0]
        assert dequantize([4], 0.5).tolist() == [2.0]

    def test_error_bound(self):
        rng = np.random.default_rng(0)
        x = rng.normal(scale=100, size=10000)
        for step in (0.1, 1.0, 7.0, 64.0):
            assert np.max(np.abs(dequantize(quantize(x, step), step) - x)) <= step / 2 + 1e-9

    def test_positive_step(self):
        with pytest.raises(ValueError):
            QuantParams(0.0)
        with pytest.raises(ValueError):
            quantize([1.0], -1.0)


class TestBits:
    def test_msb_first_with_padding(self):
        buf = np.zeros(4, dtype=np.uint8)
        cursor = new_cursor()
        write_bits(buf, cursor, 1, 1)
        write_bits(buf, cursor, 0, 1)
        write_bits(buf, cursor, 1, 1)
        assert flush_bits(buf, cursor) == 1
        assert buf[0] == 0xA0

    def test_wide_value(self):
        buf = np.zeros(16, dtype=np.uint8)
        cursor = new_cursor()
        write_bits(buf, cursor, 1, 3)
        write_bits(buf, cursor, 2 ** 50 + 5, 51)
        size = flush_bits(buf, cursor)
        assert size == 7
        reader = new_cursor()
        assert read_bits(buf[:size], reader, 3) == 1
        assert read_bits(buf[:size], reader, 51) == 2 ** 50 + 5

    def test_reader(self):
        data = np.frombuffer(b"\xa5\x0f", dtype=np.uint8)
        cursor = new_cursor()
        assert read_bits(data, cursor, 4) == 0xA
        assert read_bits(data, cursor, 8) == 0x50
        assert read_bits(data, cursor, 4) == 0xF
        assert cursor[0] == 2 and cursor[1] == 0

    def test_reader_truncated(self):
        assert read_bits(np.array([1], dtype=np.uint8), new_cursor(), 9) == -1


class TestAdaptation:
    def test_zero_symbol_enters_run_mode(self):
        krp = 0
        for _ in range(6):
            krp = adapt_symbol(krp, 0)
        assert krp == 18
        assert krp >> 4 == 1

    def test_run_updates(self):
        assert adapt_run(18, True) == 20
        assert adapt_run(18, False) == 17

    def test_state_tracks_mode(self):
        state = RlgrState()
        for _ in range(6):
            state = state.after_symbol(0)
        assert (state.krp, state.kr) == (18, 1) and state.run_mode
        state = state.after_run(False).after_run(False).after_run(False)
        assert state.krp == 15 and not state.run_mode
        assert state.after_quotient(3).k == 0 and state.after_quotient(30).kp == 31

    def test_clamped(self):
        assert adapt_symbol(0, 5) == 0
        assert adapt_quotient(0, 0) == 0
        assert adapt_quotient(0, 1) == 0
        assert adapt_quotient(0, 500) == PARAM_MAX
        assert adapt_run(PARAM_MAX, True) == PARAM_MAX


class TestRlgr:
    def test_all_zero_stream_is_small(self):
        data = rlgr_encode([0] * 1000)
        assert len(data) < 128
        round_trip([0] * 1000)

    def test_empty(self):
        assert rlgr_encode([]) == b""
        assert rlgr_decode(b"", 0).tolist() == []

    def test_single_zero(self):
        assert rlgr_encode([0]) == b"\x00"
        assert rlgr_decode(b"\x00", 1).tolist() == [0]

    def test_laplacian(self):
        rng = np.random.default_rng(1)
        for scale in (0.3, 2.0, 50.0):
            round_trip(np.round(rng.laplace(scale=scale, size=100000)).astype(np.int64))

    def test_adversarial_patterns(self):
        rng = np.random.default_rng(2)
        round_trip(np.tile([1, -1], 5000))
        round_trip(np.concatenate([np.zeros(4000, int), [7], np.zeros(100, int), [-3]]))
        heavy = (rng.standard_cauchy(size=20000) * 10).clip(-2 ** 40, 2 ** 40).astype(np.int64)
        round_trip(heavy)
        spikes = np.zeros(30000, dtype=np.int64)
        spikes[rng.choice(30000, 50, replace=False)] = rng.integers(-10 ** 6, 10 ** 6, 50)
        round_trip(spikes)
        round_trip([2 ** 50, -(2 ** 50), 0, 1])

    def test_known_bytes(self):
        # u = 6, 3, 0, 10 coded with k = 0 throughout: 1111110 1110 0 11111111110 + pad
        assert rlgr_encode([3, -2, 0, 5]) == b"\xfd\xcf\xfc"
        assert rlgr_decode(b"\xfd\xcf\xfc", 4).tolist() == [3, -2, 0, 5]

    def test_partial_run(self):
        # six zeros in no-run mode, then run mode with k_R = 1: flag 1, r = 0, GR(1)
        assert rlgr_encode([0] * 6 + [1]) == b"\x02\x80"
        assert rlgr_decode(b"\x02\x80", 7).tolist() == [0] * 6 + [1]

    def test_run_past_count(self):
        # same prefix with r = 1, one symbol short of the run's end
        with pytest.raises(BitstreamFormatError):
            rlgr_decode(b"\x03\x80", 7)

    def test_truncated(self):
        symbols = np.random.default_rng(3).integers(1, 100, size=1000)
        data = rlgr_encode(symbols)
        with pytest.raises(TruncatedStreamError):
            rlgr_decode(data[:len(data) // 2], len(symbols))

    def test_surplus(self):
        data = rlgr_encode([3, -2, 0, 5])
        with pytest.raises(SurplusDataError):
            rlgr_decode(data + b"\x00", 4)
        with pytest.raises(SurplusDataError):
            rlgr_decode(rlgr_encode([0] * 50), 10)

    @pytest.mark.slow
    def test_million_symbols(self):
        rng = np.random.default_rng(4)
        parts = [
            np.zeros(200000, dtype=np.int64),
            np.tile([1, -1], 100000),
            np.round(rng.laplace(scale=1.0, size=200000)).astype(np.int64),
            (rng.standard_cauchy(size=200000) * 5).clip(-2 ** 30, 2 ** 30).astype(np.int64),
            rng.integers(-1000, 1000, size=200000),
        ]
        symbols = np.concatenate(parts)
        round_trip(symbols[:1000])
        start = time.perf_counter()
        round_trip(symbols)
        assert time.perf_counter() - start < 2.0


class TestBitstream:
    def test_round_trip(self):
        header = sample_header()
        payloads = (b"\x01\x02", b"", b"\xff" * 10)
        data = serialize(header, payloads)
        stream = deserialize(data)
        assert stream.header == header
        assert stream.payloads == payloads
        assert len(stream) == len(data)
        assert stream.to_bytes() == data

    def test_little_endian_layout(self):
        data = serialize(sample_header(depth=3, block_sizes=(2, 2, 2), n_points=5), (b"", b"", b""))
        assert data[:4] == b"IRGF"
        assert data[4] == 1
        assert struct.unpack_from("<3H", data, 8) == (2, 2, 2)
        offset = 8 + 6
        step, predictor, k, color, n, channels = struct.unpack_from("<dBBBQB", data, offset)
        assert (step, predictor, k, color, n, channels) == (16.0, 1, 7, 0, 5, 3)

    def test_step_stored_exactly(self):
        header = sample_header(step=0.1 + 0.2)
        assert deserialize(serialize(header, (b"",) * 3)).header.step == 0.1 + 0.2

    def test_bad_magic(self):
        data = bytearray(serialize(sample_header(), (b"",) * 3))
        data[0:4] = b"NOPE"
        with pytest.raises(BitstreamFormatError) as err:
            deserialize(bytes(data))
        assert err.value.code == 40

    def test_bad_version(self):
        data = bytearray(serialize(sample_header(), (b"",) * 3))
        data[4] = 9
        with pytest.raises(BitstreamFormatError):
            deserialize(bytes(data))

    def test_truncated(self):
        data = serialize(sample_header(), (b"abc",) * 3)
        with pytest.raises(TruncatedStreamError):
            deserialize(data[:-1])
        with pytest.raises(TruncatedStreamError):
            deserialize(data[:10])

    def test_trailing_bytes(self):
        data = serialize(sample_header(), (b"",) * 3)
        with pytest.raises(SurplusDataError):
            deserialize(data + b"\x00")

    def test_payload_count(self):
        with pytest.raises(BitstreamFormatError):
            serialize(sample_header(), (b"",))

    def test_sizes(self):
        stream = Bitstream(sample_header(), (b"ab", b"", b"c"))
        assert stream.payload_size == 3 * 4 + 3
        assert len(stream) == stream.header_size + stream.payload_size
