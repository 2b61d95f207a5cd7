import json
import threading

import pytest

from unspsc_llm.cache import CacheEntry, ResponseCache, StoreUnavailable, utc_now_iso


def entry(key="k1", text="43212110"):
    return CacheEntry(
        key=key,
        response_text=text,
        finish_reason="stop",
        prompt_tokens=10,
        completion_tokens=2,
        backend_id="mock",
        created_at=utc_now_iso(),
    )


@pytest.fixture
def cache_path(tmp_path):
    return tmp_path / "cache" / "responses.jsonl"


class TestRoundTrip:
    def test_get_after_put(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            stored = entry()
            cache.put(stored)
            assert cache.get("k1") == stored

    def test_missing_key(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            assert cache.get("never") is None

    def test_last_writer_wins(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            cache.put(entry(text="first"))
            cache.put(entry(text="second"))
            assert cache.get("k1").response_text == "second"

    def test_persistence_across_reopen(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            cache.put(entry())
        with ResponseCache.open(cache_path) as cache:
            assert cache.get("k1").response_text == "43212110"

    def test_open_nonexistent_creates_empty_store(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            assert len(cache) == 0
        assert cache_path.exists()

    def test_reopen_after_many_puts(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            for index in range(1000):
                cache.put(entry(key=f"k{index}"))
        with ResponseCache.open(cache_path) as cache:
            assert len(cache) == 1000


class TestValidation:
    def test_empty_key_rejected(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            with pytest.raises(ValueError):
                cache.put(entry(key=""))

    def test_closed_store(self, cache_path):
        cache = ResponseCache.open(cache_path)
        cache.close()
        with pytest.raises(StoreUnavailable):
            cache.put(entry())
        with pytest.raises(StoreUnavailable):
            cache.get("k1")


class TestTolerance:
    def test_corrupted_line_skipped(self, cache_path, caplog):
        cache_path.parent.mkdir(parents=True)
        lines = [json.dumps(vars(entry(key=f"k{i}"))) for i in range(10)]
        lines[4] = '{"key": "broken", "response_text"'
        cache_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with caplog.at_level("WARNING"):
            with ResponseCache.open(cache_path) as cache:
                assert len(cache) == 9
        assert any("unreadable cache line" in message for message in caplog.messages)

    def test_any_file_prefix_opens(self, cache_path):
        cache_path.parent.mkdir(parents=True)
        full_lines = [json.dumps(vars(entry(key=f"k{i}"))) + "\n" for i in range(5)]
        blob = "".join(full_lines).encode("utf-8")
        for cut in range(0, len(blob) + 1, 37):
            cache_path.write_bytes(blob[:cut])
            with ResponseCache.open(cache_path) as cache:
                complete = sum(1 for line in full_lines if blob[:cut].decode().count(line))
                assert len(cache) == complete
            cache_path.unlink()


class TestConcurrency:
    def test_concurrent_puts_are_well_formed(self, cache_path):
        with ResponseCache.open(cache_path) as cache:
            threads = [
                threading.Thread(target=cache.put, args=(entry(key=f"k{i}"),)) for i in range(100)
            ]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()
        lines = cache_path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 100
        keys = {json.loads(line)["key"] for line in lines}
        assert keys == {f"k{i}" for i in range(100)}
