"""Walk-forward evaluation engine for cross-sectional stock ranking
forecasters: panel ingestion, leakage-audited feature construction,
classical and gateway-backed forecasters, per-date calibration, cost-aware
long/short backtests, and DM/PT/SPA significance testing."""

__version__ = "0.1.0"
