"""Tests for utility functions."""

from src.utils import (
    clean_field,
    derive_seeds,
    file_header,
    format_duration,
    sanitize_filename,
    stable_bucket,
)


class TestSanitizeFilename:
    def test_removes_special_chars(self):
        assert sanitize_filename('user<>:"/\\|?*name') == "user_________name"

    def test_normal_name(self):
        assert sanitize_filename("u001_2013-11-05") == "u001_2013-11-05"


class TestFormatDuration:
    def test_seconds(self):
        assert format_duration(45) == "0:45"

    def test_minutes(self):
        assert format_duration(125) == "2:05"

    def test_hours(self):
        assert format_duration(3661) == "1:01:01"


def test_file_header():
    assert file_header("abc123def456", 7) == "# config=abc123def456 seed=7"


class TestStableBucket:
    def test_in_range(self):
        for text in ("Call:+1555", "WiFi:home", "ApplicationUsage:com.chat", ""):
            assert 0 <= stable_bucket(text, 16) < 16

    def test_repeatable(self):
        assert stable_bucket("SMS:+98935", 16) == stable_bucket("SMS:+98935", 16)


class TestDeriveSeeds:
    def test_fixed_by_master_seed(self):
        assert derive_seeds(5, 4) == derive_seeds(5, 4)

    def test_distinct_children(self):
        seeds = derive_seeds(5, 4)
        assert len(set(seeds)) == 4

    def test_master_seed_matters(self):
        assert derive_seeds(5, 3) != derive_seeds(6, 3)


def test_clean_field_removes_separators():
    assert clean_field("a\tb\nc\r\nd") == "a b c d"
