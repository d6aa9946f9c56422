"""Twenty-device store for the analysis-report tests.

Everything the reports should find is written out literally: which
hostname each device contacted, the registered domain that hostname
reduces to, which resolver carried each query, which TLS version each
hello negotiates. The twins in report_bruteforce.py recompute the
expected report contents from these literals alone, so any drift in the
ingest, resolution, or aggregation path shows up as a mismatch.

The computer cohort contacts exactly ten registered domains, so the
computer-popularity decile of a domain equals its 1-based rank and can
be checked by eye.
"""

from __future__ import annotations

import hashlib
from collections import namedtuple

import packetcraft

from lanlens.flows import FlowKey, FlowWindow
from lanlens.identity import LabelTriple
from lanlens.store import Store
from lanlens.tls import parse_client_hello
from lanlens.uploads import DeviceInventory, DnsUpload, HelloUpload, UploadBatch

Device = namedtuple("Device", "key oui classification raw_name raw_category"
                              " raw_vendor category vendor")
Contact = namedtuple("Contact", "key hostname registered ip port transport"
                                " sent received")
Hello = namedtuple("Hello", "key version legacy supported suites")
Lookup = namedtuple("Lookup", "key resolver query answer")

LAN_RESOLVER = "192.168.1.1"
ROGUE_RESOLVER = "8.8.8.8"

# category/vendor columns hold the standardized values the collector
# should derive from the raw columns; the twins trust them as ground truth
DEVICES = (
    Device("t1", "28:6d:97", "smart-home",
           "Living Room TV", "television", "samsung", "tv", "Samsung"),
    Device("t2", "28:6d:97", "smart-home",
           "bedroom tv", "television", "samsung", "tv", "Samsung"),
    Device("t3", "60:ab:14", "smart-home",
           "den tv", "television", "lg", "tv", "LG"),
    Device("t4", "ac:3a:7a", "smart-home",
           "streaming stick", "streaming", "roku", "tv", "Roku"),
    Device("c1", "f8:ca:b8", "general-purpose",
           "office desktop", "desktop computer", "Dell", "computer", "Dell"),
    Device("c2", "a4:83:e7", "general-purpose",
           "personal laptop", "laptop", "apple", "computer", "Apple"),
    Device("c3", "f8:ca:b8", "general-purpose",
           "old tower", "desktop computer", "Dell", "computer", "Dell"),
    Device("c4", "a4:83:e7", "general-purpose",
           "macbook", "macbook", "apple", "computer", "Apple"),
    Device("c5", "3c:52:82", "general-purpose",
           "work laptop", "laptop", "HP", "computer", "HP"),
    Device("c6", "54:ab:3a", "general-purpose",
           "thinkpad", "laptop", "Lenovo", "computer", "Lenovo"),
    Device("p1", "d4:a6:51", "smart-home",
           "smart plug", "smart plug", "tuya", "plug", "TuYa"),
    Device("p2", "ec:1a:59", "smart-home",
           "hall plug", "smart plug", "belkin", "plug", "Belkin"),
    Device("v1", "fc:a1:83", "smart-home",
           "kitchen speaker", "smart speaker", "amazon", "voice", "Amazon"),
    Device("cam1", "2c:aa:8e", "smart-home",
           "yard camera", "security camera", "wyze", "camera", "Wyze"),
    Device("cam2", "2c:aa:8e", "smart-home",
           "nursery camera", "camera", "wyze", "camera", "Wyze"),
    Device("h1", "00:17:88", "smart-home",
           "light hub", "hub", "philips", "hub", "Philips"),
    Device("h2", "28:6d:97", "smart-home",
           "home hub", "hub", "samsung", "hub", "Samsung"),
    Device("h3", "60:ab:14", "smart-home",
           "coffee maker", "coffee maker", "lg", "appliance", "LG"),
    Device("h4", "18:b4:30", "unknown", None, None, None, None, None),
    Device("g1", "7c:bb:8a", "smart-home",
           "game console", "game console", "nintendo", "game", "Nintendo"),
)

IDS = {d.key: hashlib.sha256(f"device-{100 + n}".encode()).hexdigest()
       for n, d in enumerate(DEVICES, start=1)}

# Every hostname contact also produces a DNS observation through the LAN
# resolver, which is what lets the report resolve the flow back to a name.
# hostname None means the device talked straight to an address.
CONTACTS = (
    # the four TVs all reach doubleclick; two also reach scorecardresearch
    Contact("t1", "ads.doubleclick.net", "doubleclick.net",
            "198.51.100.20", 443, "tcp", 1200, 5600),
    Contact("t1", "b.scorecardresearch.com", "scorecardresearch.com",
            "198.51.100.21", 443, "tcp", 300, 900),
    Contact("t2", "ads.doubleclick.net", "doubleclick.net",
            "198.51.100.20", 443, "tcp", 1100, 5200),
    Contact("t2", "sb.scorecardresearch.com", "scorecardresearch.com",
            "198.51.100.22", 443, "tcp", 250, 800),
    Contact("t3", "pubads.doubleclick.net", "doubleclick.net",
            "198.51.100.23", 443, "tcp", 900, 4100),
    Contact("t4", "stats.doubleclick.net", "doubleclick.net",
            "198.51.100.24", 443, "tcp", 700, 3600),
    # computers: doubleclick on half of them, plus a long tail that fills
    # the popularity ranking out to exactly ten domains
    Contact("c1", "ads.doubleclick.net", "doubleclick.net",
            "198.51.100.20", 443, "tcp", 400, 1500),
    Contact("c1", "www.example.org", "example.org",
            "203.0.113.10", 443, "tcp", 5000, 90000),
    Contact("c1", "news.example.net", "example.net",
            "203.0.113.11", 443, "tcp", 2000, 45000),
    Contact("c2", "ads.doubleclick.net", "doubleclick.net",
            "198.51.100.20", 443, "tcp", 350, 1300),
    Contact("c2", "www.example.org", "example.org",
            "203.0.113.10", 443, "tcp", 4200, 81000),
    Contact("c2", "www.example.org", "example.org",
            "203.0.113.10", 80, "tcp", 600, 2400),
    Contact("c2", "cdn.example.com", "example.com",
            "203.0.113.12", 443, "tcp", 900, 220000),
    Contact("c3", "ads.doubleclick.net", "doubleclick.net",
            "198.51.100.20", 443, "tcp", 380, 1400),
    Contact("c3", "wiki.example.edu", "example.edu",
            "203.0.113.13", 443, "tcp", 1500, 30000),
    Contact("c4", "b.scorecardresearch.com", "scorecardresearch.com",
            "198.51.100.21", 443, "tcp", 280, 850),
    Contact("c4", "www.example.org", "example.org",
            "203.0.113.10", 443, "tcp", 3900, 76000),
    Contact("c5", "mail.example.io", "example.io",
            "203.0.113.14", 443, "tcp", 8000, 12000),
    Contact("c5", "weather.example.co.uk", "example.co.uk",
            "203.0.113.15", 443, "tcp", 500, 9000),
    Contact("c6", "shop.example.biz", "example.biz",
            "203.0.113.16", 443, "tcp", 1100, 33000),
    Contact("c6", "api.example.dev", "example.dev",
            "203.0.113.17", 443, "tcp", 750, 6100),
    # cleartext HTTP from the yard camera and the console
    Contact("cam1", "api.wyze-io.example", "wyze-io.example",
            "203.0.113.30", 80, "tcp", 15000, 2500),
    Contact("g1", "game.eshop-cdn.example", "eshop-cdn.example",
            "203.0.113.31", 80, "tcp", 2200, 480000),
    # control channels: resolved, unresolved, and a voice assistant
    Contact("p1", "m1.tuyaeu.com", "tuyaeu.com",
            "198.51.100.60", 8883, "tcp", 4000, 3800),
    Contact("p2", None, None,
            "203.0.113.60", 1883, "tcp", 3600, 3400),
    Contact("v1", "avs-alexa.amazon.com", "amazon.com",
            "198.51.100.61", 5223, "tcp", 9800, 10100),
    # background noise that lands in no report bucket
    Contact("h2", "hub.samsungcloudsolution.com", "samsungcloudsolution.com",
            "198.51.100.30", 443, "tcp", 800, 1900),
    Contact("h4", None, None,
            "203.0.113.40", 123, "udp", 96, 96),
)

# version column holds the effective protocol the record should report
HELLOS = (
    Hello("t1", "TLS1.0", 0x0301, None, (0xC02F, 0x009C)),
    Hello("t1", "TLS1.2", 0x0303, None, (0xC02F, 0x009C)),
    Hello("t2", "TLS1.2", 0x0303, None, (0xC02F,)),
    Hello("cam1", "TLS1.0", 0x0301, None, (0x0005, 0x002F)),
    Hello("cam2", "SSL3.0", 0x0300, None, (0x0008, 0x000A)),
    Hello("h1", "TLS1.2", 0x0303, None, (0xC02F,)),
    Hello("g1", "TLS1.3", 0x0303, (0x0304,), (0x1301, 0x1302)),
    Hello("c1", "TLS1.3", 0x0303, (0x0304,), (0x1301,)),
    Hello("v1", "TLS1.2", 0x0303, None, (0x009C,)),
)

# resolver-only traffic: the hub that hardcodes a public resolver, the
# coffee maker that splits its queries, and the unlabeled box whose
# expected resolver nobody knows
LOOKUPS = (
    Lookup("h1", ROGUE_RESOLVER, "time.hub-ota.example", "203.0.113.50"),
    Lookup("h1", ROGUE_RESOLVER, "fw.hub-ota.example", "203.0.113.51"),
    Lookup("h3", ROGUE_RESOLVER, "brew1.coffee-cloud.example", "203.0.113.52"),
    Lookup("h3", ROGUE_RESOLVER, "brew2.coffee-cloud.example", "203.0.113.53"),
    Lookup("h3", ROGUE_RESOLVER, "brew3.coffee-cloud.example", "203.0.113.54"),
    Lookup("h3", LAN_RESOLVER, "brew4.coffee-cloud.example", "203.0.113.55"),
    Lookup("h3", LAN_RESOLVER, "brew5.coffee-cloud.example", "203.0.113.56"),
    Lookup("h4", LAN_RESOLVER, "nas.local-guess.example", "203.0.113.57"),
)

# what DHCP advertised, as the report consumer would supply it; nobody
# knows what lease the unlabeled box got
EXPECTED_RESOLVERS = {IDS[d.key]: LAN_RESOLVER
                      for d in DEVICES if d.key != "h4"}

_BASE_TS = 1_700_000_100.0


def build_report_store(store: Store | None = None) -> Store:
    store = store or Store()
    stamps = iter(_BASE_TS + 0.25 * i for i in range(1000))

    flows = []
    dns_rows = []
    for c in CONTACTS:
        ts = next(stamps)
        if c.hostname:
            dns_rows.append(DnsUpload(IDS[c.key], c.hostname, (c.ip,),
                                      LAN_RESOLVER, ts))
        flows.append(FlowWindow(FlowKey(IDS[c.key], c.ip, c.port,
                                        c.transport),
                                int(ts // 5) * 5, c.sent, c.received, ts))
    for look in LOOKUPS:
        dns_rows.append(DnsUpload(IDS[look.key], look.query, (look.answer,),
                                  look.resolver, next(stamps)))

    hellos = []
    for n, h in enumerate(HELLOS):
        raw = packetcraft.client_hello(legacy_version=h.legacy,
                                       cipher_suites=h.suites,
                                       supported_versions=h.supported)
        record = parse_client_hello(raw, device_id=IDS[h.key],
                                    timestamp=next(stamps))
        hellos.append(HelloUpload(record, f"192.0.2.{100 + n}", 443))

    batch = UploadBatch(
        client_version="0.1.0", user_id="report-user", timezone="UTC",
        devices=tuple(DeviceInventory(IDS[d.key], d.oui, d.classification,
                                      True) for d in DEVICES),
        flow_windows=tuple(flows),
        client_hellos=tuple(hellos),
        dns_observations=tuple(dns_rows),
        labels=tuple(LabelTriple(IDS[d.key], d.raw_name, d.raw_category,
                                 d.raw_vendor)
                     for d in DEVICES if d.raw_name is not None),
    )
    ack = store.ingest(batch)
    assert not ack.rejected, ack.rejected
    return store
