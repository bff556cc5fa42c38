"""Boundary-semantic collaborative guidance network for salient object detection."""
