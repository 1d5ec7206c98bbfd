"""Joint task offloading and OFDMA resource allocation for multi-server MEC."""
