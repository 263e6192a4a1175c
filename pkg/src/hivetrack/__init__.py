"""Hive-entrance bee tracking and analytics."""
