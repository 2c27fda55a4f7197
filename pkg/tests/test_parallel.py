"""
Unit tests for splatreg.parallel
"""

import pytest

from splatreg.parallel import CHUNK_ELEMENTS, map_chunks, pairwise_sum, point_chunks, worker_count


class TestChunks:
    """Chunking depends on problem size only"""

    def test_chunks_cover_range(self):
        chunks = point_chunks(10000, 100)
        covered = [i for c in chunks for i in range(c.start, c.stop)]
        assert covered == list(range(10000))
        assert all(100 * (c.stop - c.start) <= CHUNK_ELEMENTS for c in chunks)

    def test_empty_range(self):
        assert point_chunks(0, 5) == []

    def test_pairwise_sum_order(self):
        """((a + b) + (c + d)) + e"""
        assert pairwise_sum(['a', 'b', 'c', 'd', 'e'], lambda x, y: f"({x}{y})") == '(((ab)(cd))e)'

    def test_pairwise_sum_needs_parts(self):
        with pytest.raises(ValueError):
            pairwise_sum([], lambda x, y: x + y)

    def test_map_preserves_order(self, monkeypatch):
        monkeypatch.setenv('SPLATREG_THREADS', '3')
        chunks = point_chunks(50, CHUNK_ELEMENTS // 4)
        assert map_chunks(lambda c: c.start, chunks) == list(range(0, 50, 4))


class TestWorkerCount:
    """SPLATREG_THREADS handling"""

    def test_explicit_value(self, monkeypatch):
        monkeypatch.setenv('SPLATREG_THREADS', '2')
        assert worker_count() == 2

    @pytest.mark.parametrize("raw", ['0', '', 'many'])
    def test_fallback_to_cpu_count(self, monkeypatch, raw):
        monkeypatch.setenv('SPLATREG_THREADS', raw)
        assert worker_count() >= 1


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
