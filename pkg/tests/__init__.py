"""Test suite for Professor Gemini."""
