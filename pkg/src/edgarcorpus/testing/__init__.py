"""Offline test harness: a mock EDGAR archive and an extraction-service stub."""

from .mock_edgar import ExtractionServiceStub, FaultPlan, MockEdgarServer, throttle_page

__all__ = ["MockEdgarServer", "FaultPlan", "ExtractionServiceStub", "throttle_page"]
