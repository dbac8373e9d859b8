"""navrad: a desk-scale maritime radar network testbed.

Radar video (ASTERIX CAT-240) and sensor (NMEA 0183 / AIS) protocol
codecs, a software PPI with ARPA tracking, a deterministic scenario
simulator, the radar traffic-injection attacks, and a self-configuring
policy detector, wired together by a seeded in-process bus or real UDP
multicast.
"""

__version__ = "0.1.0"
