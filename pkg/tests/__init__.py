"""
kausal Unit Tests
=================

Unit tests for the kausal modules and CLI.
"""
