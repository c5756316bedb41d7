"""PV-battery hybrid resource sizing and multi-market bidding co-optimization."""
