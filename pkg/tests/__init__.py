"""Tests for the ASR evaluation harness."""
