"""
BlockSplat Test Suite

Tests for the reconstruction pipeline components.
"""
