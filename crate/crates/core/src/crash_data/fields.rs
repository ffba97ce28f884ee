//! Catalogue of the tabular crash attributes.
//!
//! Each [`Field`] knows its source column name, its snake-case name (used by
//! narrative templates), the attribute group it belongs to and how its cells
//! are validated.

use std::fmt;
use std::str::FromStr;

/// The six attribute groups, in narrative order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldGroup {
    CrashCharacteristics,
    Driver,
    Vehicle,
    Roadway,
    Environment,
    Situation,
}

impl FieldGroup {
    pub const ALL: [FieldGroup; 6] = [
        FieldGroup::CrashCharacteristics,
        FieldGroup::Driver,
        FieldGroup::Vehicle,
        FieldGroup::Roadway,
        FieldGroup::Environment,
        FieldGroup::Situation,
    ];
}

/// How a cell is validated on ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// Free categorical text.
    Categorical,
    /// Non-negative integer with an inclusive lower bound.
    Count { min: u32 },
    /// Non-negative quantity rendered with a unit.
    Measure { unit: &'static str },
    /// Calendar month, 1 through 12.
    Month,
    /// Categorical value that gets a unit appended when the cell is a bare number.
    CategoricalWithUnit { unit: &'static str },
}

macro_rules! fields {
    ($( $variant:ident => $column:literal, $name:literal, $group:ident, $kind:expr; )*) => {
        /// One attribute of a crash record.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Field {
            $($variant,)*
        }

        impl Field {
            /// Every field, grouped and ordered as in the canonical schema.
            pub const ALL: &'static [Field] = &[$(Field::$variant,)*];

            /// Upper-case source column name, e.g. `SPEED_ZONE`.
            pub fn column(self) -> &'static str {
                match self { $(Field::$variant => $column,)* }
            }

            /// Snake-case name used in templates, e.g. `speed_zone`.
            pub fn name(self) -> &'static str {
                match self { $(Field::$variant => $name,)* }
            }

            pub fn group(self) -> FieldGroup {
                match self { $(Field::$variant => FieldGroup::$group,)* }
            }

            pub fn kind(self) -> FieldKind {
                match self { $(Field::$variant => $kind,)* }
            }
        }
    };
}

use FieldKind::*;

fields! {
    AccidentType => "ACCIDENT_TYPE", "accident_type", CrashCharacteristics, Categorical;
    EventType => "EVENT_TYPE", "event_type", CrashCharacteristics, Categorical;
    Vehicle1CollPt => "VEHICLE_1_COLL_PT", "vehicle_1_coll_pt", CrashCharacteristics, Categorical;
    Vehicle2CollPt => "VEHICLE_2_COLL_PT", "vehicle_2_coll_pt", CrashCharacteristics, Categorical;
    ObjectType => "OBJECT_TYPE", "object_type", CrashCharacteristics, Categorical;
    Dca => "DCA", "dca", CrashCharacteristics, Categorical;
    AccidentMonth => "ACCIDENT_MONTH", "accident_month", CrashCharacteristics, Month;
    TimePeriod => "TIME_PERIOD", "time_period", CrashCharacteristics, Categorical;
    DayOfWeek => "DAY_OF_WEEK", "day_of_week", CrashCharacteristics, Categorical;
    LgaName => "LGA_NAME", "lga_name", CrashCharacteristics, Categorical;
    RegionName => "REGION_NAME", "region_name", CrashCharacteristics, Categorical;
    DegUrbanName => "DEG_URBAN_NAME", "deg_urban_name", CrashCharacteristics, Categorical;

    DriverSex => "DRIVER_SEX", "driver_sex", Driver, Categorical;
    AgeGroup => "AGE_GROUP", "age_group", Driver, Categorical;
    RoadUserType => "ROAD_USER_TYPE", "road_user_type", Driver, Categorical;
    HelmetBeltWorn => "HELMET_BELT_WORN", "helmet_belt_worn", Driver, Categorical;

    VehicleType => "VEHICLE_TYPE", "vehicle_type", Vehicle, Categorical;
    VehicleWeight => "VEHICLE_WEIGHT", "vehicle_weight", Vehicle, Measure { unit: "kilograms" };
    NoOfWheels => "NO_OF_WHEELS", "no_of_wheels", Vehicle, Count { min: 0 };
    SeatingCapacity => "SEATING_CAPACITY", "seating_capacity", Vehicle, Count { min: 0 };
    FuelType => "FUEL_TYPE", "fuel_type", Vehicle, Categorical;
    VehicleAge => "VEHICLE_AGE", "vehicle_age", Vehicle, Measure { unit: "years" };
    VehicleBodyStyle => "VEHICLE_BODY_STYLE", "vehicle_body_style", Vehicle, Categorical;
    TrailerType => "TRAILER_TYPE", "trailer_type", Vehicle, Categorical;
    Lamps => "LAMPS", "lamps", Vehicle, Categorical;
    VehicleMovement => "VEHICLE_MOVEMENT", "vehicle_movement", Vehicle, Categorical;

    RoadType => "ROAD_TYPE", "road_type", Roadway, Categorical;
    RoadGeometry => "ROAD_GEOMETRY", "road_geometry", Roadway, Categorical;
    SpeedZone => "SPEED_ZONE", "speed_zone", Roadway, CategoricalWithUnit { unit: "km/hr" };
    RoadSurfaceType => "ROAD_SURFACE_TYPE", "road_surface_type", Roadway, Categorical;
    RoadTypeInt => "ROAD_TYPE_INT", "road_type_int", Roadway, Categorical;
    ComplexIntNo => "COMPLEX_INT_NO", "complex_int_no", Roadway, Categorical;

    LightCondition => "LIGHT_CONDITION", "light_condition", Environment, Categorical;
    SurfaceCond => "SURFACE_COND", "surface_cond", Environment, Categorical;
    SurfaceCondSeq => "SURFACE_COND_SEQ", "surface_cond_seq", Environment, Count { min: 1 };
    AtmosphCond => "ATMOSPH_COND", "atmosph_cond", Environment, Categorical;
    AtmosphCondSeq => "ATMOSPH_COND_SEQ", "atmosph_cond_seq", Environment, Count { min: 1 };

    NoOfVehicles => "NO_OF_VEHICLES", "no_of_vehicles", Situation, Count { min: 1 };
    TrafficControl => "TRAFFIC_CONTROL", "traffic_control", Situation, Categorical;
    NoPersons => "NO_PERSONS", "no_persons", Situation, Count { min: 1 };
    NoOccupants => "NO_OCCUPANTS", "no_occupants", Situation, Count { min: 0 };
    SubDca => "SUB_DCA", "sub_dca", Situation, Categorical;
    SubDcaSeq => "SUB_DCA_SEQ", "sub_dca_seq", Situation, Count { min: 1 };
    DriverIntent => "DRIVER_INTENT", "driver_intent", Situation, Categorical;
}

impl Field {
    /// Position of this field in [`Field::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit appended to bare numeric cells when rendering, if any.
    pub fn unit(self) -> Option<&'static str> {
        match self.kind() {
            Measure { unit } | CategoricalWithUnit { unit } => Some(unit),
            _ => None,
        }
    }

    /// Looks a field up by column or snake-case name, ignoring case.
    pub fn lookup(name: &str) -> Option<Field> {
        let name = name.trim();
        Field::ALL
            .iter()
            .copied()
            .find(|f| f.column().eq_ignore_ascii_case(name) || f.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::lookup(s).ok_or_else(|| format!("unknown crash field `{s}`"))
    }
}

impl serde::Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> serde::Deserialize<'de> for Field {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
