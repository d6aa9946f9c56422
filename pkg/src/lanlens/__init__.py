"""lanlens: self-hosted smart home traffic inspector.

Capture side discovers LAN devices over ARP, intercepts traffic for
explicitly monitored devices, and extracts a minimal set of metadata.
Collector side ingests anonymized uploads, serves the dashboard API,
and exports the release CSVs.
"""

__version__ = "0.1.0"
