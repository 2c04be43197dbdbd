"""Scenario runner, calibration, reports and the interactive console."""
