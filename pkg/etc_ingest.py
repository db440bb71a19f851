#!/usr/bin/env python3
"""
ETC Ingest - parse toll transactions into trips, slot them, attach context

Transaction file layout (UTF-8, comma separated, `#` comment lines allowed
before the header):

    vehicle_id,vehicle_type,entry_station,entry_time,exit_station,exit_time,axle_count,weight_kg

Context calendar layout:

    date,day_of_week,is_holiday,weather
"""

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, asdict, replace
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from errors import DomainError, SchemaError
from highway_graph import HighwayGraph, Route

logger = logging.getLogger(__name__)

TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
DATE_FORMAT = "%Y-%m-%d"
TRANSACTION_FIELDS = ["vehicle_id", "vehicle_type", "entry_station", "entry_time",
                      "exit_station", "exit_time", "axle_count", "weight_kg"]
CONTEXT_FIELDS = ["date", "day_of_week", "is_holiday", "weather"]
DEFAULT_SLOT_WIDTH_MIN = 30
MINUTES_PER_DAY = 1440


class VehicleType(str, Enum):
    CAR = "Car"
    BUS = "Bus"
    TRUCK = "Truck"


class Weather(str, Enum):
    CLEAR = "Clear"
    RAIN = "Rain"
    HEAVY_RAIN = "HeavyRain"


def format_number(value: float) -> str:
    """Shortest text that parses back to the same float"""
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def format_time(value: datetime) -> str:
    return value.strftime(TIME_FORMAT)


def parse_time(text: str) -> datetime:
    return datetime.strptime(text.strip(), TIME_FORMAT)


def csv_line(fields: Sequence[str]) -> str:
    """One CSV record without its terminator, quoted the way csv.reader reads it back"""
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="").writerow(fields)
    return buffer.getvalue()


@dataclass(frozen=True)
class Transaction:
    """One ETC billing record: where and when a vehicle entered and left"""
    vehicle_id: str
    vehicle_type: VehicleType
    entry_station: str
    exit_station: str
    entry_time: datetime
    exit_time: datetime
    axle_count: int = 2
    weight_kg: float = 0.0

    def __post_init__(self):
        if not self.exit_time > self.entry_time:
            raise DomainError("non-positive duration")
        if self.entry_station == self.exit_station:
            raise DomainError("same entry and exit station")
        if not isinstance(self.vehicle_type, VehicleType):
            object.__setattr__(self, "vehicle_type", VehicleType(self.vehicle_type))
        if self.axle_count <= 0:
            raise DomainError("bad axle count")
        if not self.weight_kg >= 0:
            raise DomainError("bad weight")

    @property
    def duration_s(self) -> float:
        return (self.exit_time - self.entry_time).total_seconds()

    @property
    def trip_id(self) -> str:
        return f"{self.vehicle_id}@{self.entry_time:%Y%m%dT%H%M%S}"

    def to_record(self) -> List[str]:
        return [self.vehicle_id, self.vehicle_type.value, self.entry_station, format_time(self.entry_time),
                self.exit_station, format_time(self.exit_time), str(self.axle_count), format_number(self.weight_kg)]

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["vehicle_type"] = self.vehicle_type.value
        data["entry_time"] = format_time(self.entry_time)
        data["exit_time"] = format_time(self.exit_time)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'Transaction':
        fields = dict(data)
        fields["vehicle_type"] = VehicleType(fields["vehicle_type"])
        fields["entry_time"] = parse_time(fields["entry_time"])
        fields["exit_time"] = parse_time(fields["exit_time"])
        return cls(**fields)


@dataclass(frozen=True, order=True)
class TimeSlot:
    """Index of a fixed-width slot within a day"""
    index: int
    width_min: int = DEFAULT_SLOT_WIDTH_MIN

    def __post_init__(self):
        check_slot_width(self.width_min)
        if not 0 <= self.index < MINUTES_PER_DAY // self.width_min:
            raise DomainError(f"slot index {self.index} out of range for width {self.width_min}")

    @property
    def slots_per_day(self) -> int:
        return MINUTES_PER_DAY // self.width_min

    @property
    def start_minute(self) -> int:
        return self.index * self.width_min


def check_slot_width(width_min: int) -> None:
    if not isinstance(width_min, int) or width_min <= 0 or MINUTES_PER_DAY % width_min:
        raise DomainError(f"slot width must be a positive divisor of 1440 minutes, got {width_min!r}")


def slot_of(time: datetime, width_min: int = DEFAULT_SLOT_WIDTH_MIN) -> TimeSlot:
    """Slot of the day containing a timestamp"""
    check_slot_width(width_min)
    minutes = time.hour * 60 + time.minute
    return TimeSlot(minutes // width_min, width_min)


def absolute_slot(time: datetime, width_min: int) -> int:
    """Slot counted from 1970-01-01, so slots of different days never collide"""
    check_slot_width(width_min)
    days = (time.date() - date(1970, 1, 1)).days
    return days * (MINUTES_PER_DAY // width_min) + slot_of(time, width_min).index


def absolute_slot_start(slot: int, width_min: int) -> datetime:
    return datetime(1970, 1, 1) + timedelta(minutes=slot * width_min)


@dataclass(frozen=True)
class Trip:
    """A transaction with its duration, origin slot and, once known, its route"""
    transaction: Transaction
    duration_s: float
    origin_slot: TimeSlot
    route: Optional[Route] = None

    @classmethod
    def from_transaction(cls, transaction: Transaction, width_min: int = DEFAULT_SLOT_WIDTH_MIN,
                         route: Optional[Route] = None) -> 'Trip':
        return cls(transaction, transaction.duration_s, slot_of(transaction.entry_time, width_min), route)

    def with_route(self, route: Optional[Route]) -> 'Trip':
        return replace(self, route=route)

    @property
    def trip_id(self) -> str:
        return self.transaction.trip_id

    @property
    def vehicle_id(self) -> str:
        return self.transaction.vehicle_id

    @property
    def vehicle_type(self) -> VehicleType:
        return self.transaction.vehicle_type

    @property
    def origin(self) -> str:
        return self.transaction.entry_station

    @property
    def destination(self) -> str:
        return self.transaction.exit_station

    @property
    def entry_time(self) -> datetime:
        return self.transaction.entry_time

    @property
    def exit_time(self) -> datetime:
        return self.transaction.exit_time


@dataclass(frozen=True)
class RejectReport:
    line_number: int
    reason: str
    raw: str = ""


# ---------------------------------------------------------------- transactions

def _parse_record(row: List[str], graph: HighwayGraph) -> Transaction:
    """Build a Transaction from one record, raising DomainError with the reject reason"""
    if len(row) != len(TRANSACTION_FIELDS):
        raise DomainError("wrong field count")
    vehicle_id, vtype, entry_station, entry_time, exit_station, exit_time, axles, weight = (c.strip() for c in row)
    if not vehicle_id:
        raise DomainError("missing vehicle id")
    try:
        vehicle_type = VehicleType(vtype)
    except ValueError:
        raise DomainError("unknown vehicle type") from None
    try:
        entered, exited = parse_time(entry_time), parse_time(exit_time)
    except ValueError:
        raise DomainError("bad timestamp") from None
    try:
        axle_count = int(axles)
    except ValueError:
        raise DomainError("bad axle count") from None
    try:
        weight_kg = float(weight)
    except ValueError:
        raise DomainError("bad weight") from None
    if weight_kg != weight_kg or weight_kg in (float("inf"), float("-inf")):
        raise DomainError("bad weight")
    for station in (entry_station, exit_station):
        if not graph.has_station(station):
            raise DomainError(f"unknown station {station}")
    return Transaction(vehicle_id, vehicle_type, entry_station, exit_station, entered, exited, axle_count, weight_kg)


def parse_transactions(stream: Iterable[str], graph: HighwayGraph) -> Tuple[List[Transaction], List[RejectReport]]:
    """
    Parse a transaction stream.

    Every well-formed record becomes a Transaction; everything else becomes a
    RejectReport with its line number. Accepted records keep file order.
    Duplicates of (vehicle, entry time) and trips overlapping an earlier
    accepted trip of the same vehicle are rejected too.
    """
    candidates: List[Tuple[int, Transaction]] = []
    rejects: List[RejectReport] = []
    header_seen = False

    for number, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        row = next(csv.reader([line]))
        if not header_seen:
            if [c.strip() for c in row] != TRANSACTION_FIELDS:
                raise SchemaError(f"line {number}: expected header {','.join(TRANSACTION_FIELDS)}")
            header_seen = True
            continue
        try:
            candidates.append((number, _parse_record(row, graph)))
        except DomainError as exc:
            rejects.append(RejectReport(number, str(exc), line))

    raw_by_line: Dict[int, str] = {}
    seen_keys = set()
    unique: List[Tuple[int, Transaction]] = []
    for number, tx in candidates:
        key = (tx.vehicle_id, tx.entry_time)
        if key in seen_keys:
            rejects.append(RejectReport(number, "duplicate record", csv_line(tx.to_record())))
            continue
        seen_keys.add(key)
        unique.append((number, tx))

    by_vehicle: Dict[str, List[Tuple[int, Transaction]]] = defaultdict(list)
    for number, tx in unique:
        by_vehicle[tx.vehicle_id].append((number, tx))
    overlapping = set()
    for vehicle_id in sorted(by_vehicle):
        last_exit: Optional[datetime] = None
        for number, tx in sorted(by_vehicle[vehicle_id], key=lambda item: (item[1].entry_time, item[0])):
            if last_exit is not None and tx.entry_time < last_exit:
                overlapping.add(number)
                raw_by_line[number] = csv_line(tx.to_record())
                continue
            last_exit = tx.exit_time

    accepted = []
    for number, tx in unique:
        if number in overlapping:
            rejects.append(RejectReport(number, "overlaps earlier trip", raw_by_line[number]))
        else:
            accepted.append(tx)
    rejects.sort(key=lambda r: r.line_number)

    if not header_seen:
        raise SchemaError("transaction stream has no header")
    logger.info("Parsed transactions: %d accepted, %d rejected", len(accepted), len(rejects))
    for reject in rejects:
        logger.debug("Rejected line %d: %s", reject.line_number, reject.reason)
    return accepted, rejects


def read_transactions(path: Union[str, Path], graph: HighwayGraph) -> Tuple[List[Transaction], List[RejectReport]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_transactions(f, graph)


def format_transactions(transactions: Iterable[Transaction], header: Sequence[str] = ()) -> List[str]:
    lines = [f"# {line}" for line in header]
    lines.append(",".join(TRANSACTION_FIELDS))
    lines.extend(csv_line(tx.to_record()) for tx in transactions)
    return lines


def write_transactions(transactions: Iterable[Transaction], path: Union[str, Path], header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(format_transactions(transactions, header)) + "\n")


def write_rejects(rejects: Iterable[RejectReport], path: Union[str, Path], header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["line_number", "reason", "raw"])
        for reject in rejects:
            writer.writerow([reject.line_number, reject.reason, reject.raw])


# ---------------------------------------------------------------- trips

def trips_from_transactions(transactions: Iterable[Transaction],
                            width_min: int = DEFAULT_SLOT_WIDTH_MIN) -> List[Trip]:
    return [Trip.from_transaction(tx, width_min) for tx in transactions]


def build_vehicle_history(transactions: Iterable[Transaction],
                          width_min: int = DEFAULT_SLOT_WIDTH_MIN) -> Dict[str, List[Trip]]:
    """Trips grouped per vehicle, oldest first"""
    history: Dict[str, List[Trip]] = defaultdict(list)
    for tx in transactions:
        history[tx.vehicle_id].append(Trip.from_transaction(tx, width_min))
    return {vid: sorted(trips, key=lambda t: (t.entry_time, t.exit_time, t.destination))
            for vid, trips in sorted(history.items())}


# ---------------------------------------------------------------- context

@dataclass(frozen=True)
class ContextRecord:
    """Calendar context of one day"""
    date: date
    day_of_week: int
    is_weekend: bool
    is_holiday: bool
    weather: Weather

    def __post_init__(self):
        if not 1 <= self.day_of_week <= 7:
            raise DomainError(f"day_of_week must be in 1..7, got {self.day_of_week}")
        if self.day_of_week != self.date.isoweekday():
            raise DomainError(f"day_of_week {self.day_of_week} does not match {self.date}")
        if self.is_weekend != (self.day_of_week >= 6):
            raise DomainError("is_weekend inconsistent with day_of_week")
        if not isinstance(self.weather, Weather):
            object.__setattr__(self, "weather", Weather(self.weather))

    @classmethod
    def for_date(cls, day: date, is_holiday: bool = False, weather: Weather = Weather.CLEAR) -> 'ContextRecord':
        dow = day.isoweekday()
        return cls(day, dow, dow >= 6, is_holiday, weather)

    @property
    def is_regular_day(self) -> bool:
        return not (self.is_weekend or self.is_holiday)

    def to_record(self) -> List[str]:
        return [self.date.strftime(DATE_FORMAT), str(self.day_of_week),
                "1" if self.is_holiday else "0", self.weather.value]

    def to_dict(self) -> Dict:
        return {"date": self.date.strftime(DATE_FORMAT), "day_of_week": self.day_of_week,
                "is_weekend": self.is_weekend, "is_holiday": self.is_holiday, "weather": self.weather.value}

    @classmethod
    def from_dict(cls, data: Dict) -> 'ContextRecord':
        day = datetime.strptime(data["date"], DATE_FORMAT).date()
        return cls(day, int(data["day_of_week"]), bool(data["is_weekend"]),
                   bool(data["is_holiday"]), Weather(data["weather"]))


class ContextCalendar:
    """One ContextRecord per date; unknown dates default to a clear regular day"""

    def __init__(self, records: Iterable[ContextRecord] = ()):
        self._records: Dict[date, ContextRecord] = {}
        for record in records:
            if record.date in self._records:
                raise DomainError(f"duplicate context record for {record.date}")
            self._records[record.date] = record

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, day: date) -> bool:
        return day in self._records

    def get(self, day: Union[date, datetime]) -> ContextRecord:
        if isinstance(day, datetime):
            day = day.date()
        record = self._records.get(day)
        return record if record is not None else ContextRecord.for_date(day)

    @property
    def records(self) -> List[ContextRecord]:
        return [self._records[d] for d in sorted(self._records)]

    @property
    def dates(self) -> List[date]:
        return sorted(self._records)


def parse_context_calendar(stream: Iterable[str]) -> Tuple[ContextCalendar, List[RejectReport]]:
    records: List[ContextRecord] = []
    rejects: List[RejectReport] = []
    seen = set()
    header_seen = False
    for number, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        row = [c.strip() for c in next(csv.reader([line]))]
        if not header_seen:
            if row != CONTEXT_FIELDS:
                raise SchemaError(f"line {number}: expected header {','.join(CONTEXT_FIELDS)}")
            header_seen = True
            continue
        try:
            if len(row) != len(CONTEXT_FIELDS):
                raise DomainError("wrong field count")
            try:
                day = datetime.strptime(row[0], DATE_FORMAT).date()
                dow = int(row[1])
            except ValueError:
                raise DomainError("bad date or day of week") from None
            if row[2] not in ("0", "1"):
                raise DomainError("bad holiday flag")
            try:
                weather = Weather(row[3])
            except ValueError:
                raise DomainError("unknown weather") from None
            if day in seen:
                raise DomainError("duplicate date")
            record = ContextRecord(day, dow, dow >= 6, row[2] == "1", weather)
        except DomainError as exc:
            rejects.append(RejectReport(number, str(exc), line))
            continue
        seen.add(day)
        records.append(record)
    if not header_seen:
        raise SchemaError("context stream has no header")
    if rejects:
        logger.warning("Context calendar: %d rows rejected", len(rejects))
    return ContextCalendar(records), rejects


def load_context_calendar(path: Union[str, Path]) -> ContextCalendar:
    with open(path, "r", encoding="utf-8", newline="") as f:
        calendar, _ = parse_context_calendar(f)
    logger.info("Loaded context calendar %s: %d days", path, len(calendar))
    return calendar


def write_context_calendar(calendar: ContextCalendar, path: Union[str, Path], header: Sequence[str] = ()) -> None:
    lines = [f"# {line}" for line in header] + [",".join(CONTEXT_FIELDS)]
    lines.extend(csv_line(record.to_record()) for record in calendar.records)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
