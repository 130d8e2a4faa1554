"""trendnet: trend-based load balancing for hybrid traditional/SDN networks.

Simulates a two-domain test network, collects interface-counter telemetry
through a filter/normalize/publish pipeline into a time-series store,
benchmarks per-hour-of-day link utilization, detects sustained deviations,
and pushes (then reverts) corrective routing actions. Operated through a
CLI, an HTTP/JSON service with an SSE event stream, and a web console.
"""

__version__ = "0.1.0"
