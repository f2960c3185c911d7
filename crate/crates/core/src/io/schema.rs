//! User-provided schemas for `annotate()`.
//!
//! A schema is itself a JSON document: field name → type-name string
//! (`"?"` suffix marks the field optional), nested object schemas inline,
//! and single-element arrays for array-of schemas.

use std::sync::Arc;

use crate::error::{Error, ErrorCode, Result};
use crate::jdm::{cast_item, item_matches, Item, ItemType, Object, Sequence};

#[derive(Debug, Clone)]
pub enum Schema {
    /// Any item passes through unchanged.
    Any,
    Atomic(ItemType),
    Array(Box<Schema>),
    Object(ObjectSchema),
}

#[derive(Debug, Clone)]
pub struct ObjectSchema {
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone)]
pub struct Field {
    pub name: Arc<str>,
    pub required: bool,
    pub schema: Schema,
}

impl Schema {
    /// Parse a schema document. `annotate` requires the top level to be an
    /// object schema.
    pub fn from_item(item: &Item) -> Result<Schema> {
        match item {
            Item::String(s) => {
                let (name, _optional) = split_optional(s);
                type_from_name(name)
            }
            Item::Array(elems) => {
                if elems.len() != 1 {
                    return Err(bad_schema("an array schema must have exactly one element"));
                }
                Ok(Schema::Array(Box::new(Schema::from_item(&elems[0])?)))
            }
            Item::Object(obj) => {
                let mut fields = Vec::with_capacity(obj.len());
                for (name, value) in obj.iter() {
                    let (field_name, name_optional) = split_optional(name);
                    let value_optional = match value {
                        Item::String(s) => split_optional(s).1,
                        _ => false,
                    };
                    fields.push(Field {
                        name: Arc::from(field_name),
                        required: !(name_optional || value_optional),
                        schema: Schema::from_item(value)?,
                    });
                }
                Ok(Schema::Object(ObjectSchema { fields }))
            }
            other => Err(bad_schema(format!(
                "schema must be built from type names, objects, and arrays, got {}",
                other.type_name()
            ))),
        }
    }

    pub fn as_object(&self) -> Option<&ObjectSchema> {
        match self {
            Schema::Object(o) => Some(o),
            _ => None,
        }
    }
}

fn split_optional(s: &str) -> (&str, bool) {
    match s.strip_suffix('?') {
        Some(base) => (base, true),
        None => (s, false),
    }
}

fn type_from_name(name: &str) -> Result<Schema> {
    if name == "item" {
        return Ok(Schema::Any);
    }
    match ItemType::from_name(name) {
        Some(ty) if ty.is_atomic() => Ok(Schema::Atomic(ty)),
        _ => Err(bad_schema(format!("unknown type name \"{name}\" in schema"))),
    }
}

fn bad_schema(message: impl Into<String>) -> Error {
    Error::new(ErrorCode::InvalidArgument, message)
}

fn annotate_error(path: &str, index: usize, message: impl Into<String>) -> Error {
    Error::new(
        ErrorCode::Annotate,
        format!("item {index}, path {path}: {}", message.into()),
    )
}

/// Validate/coerce one input item against an object schema, producing one
/// cell per top-level field (empty cell = absent optional field).
pub fn annotate_object(item: &Item, schema: &ObjectSchema, index: usize) -> Result<Vec<Sequence>> {
    let obj = item.as_object().ok_or_else(|| {
        annotate_error("$", index, format!("expected an object, got {}", item.type_name()))
    })?;
    let mut cells = Vec::with_capacity(schema.fields.len());
    for field in &schema.fields {
        let path = format!("$.{}", field.name);
        match obj.get(&field.name) {
            None => {
                if field.required {
                    return Err(annotate_error(&path, index, "missing required field"));
                }
                cells.push(Vec::new());
            }
            Some(Item::Null) if !field.required => cells.push(vec![Item::Null]),
            Some(value) => cells.push(vec![coerce(value, &field.schema, &path, index)?]),
        }
    }
    Ok(cells)
}

fn coerce(item: &Item, schema: &Schema, path: &str, index: usize) -> Result<Item> {
    match schema {
        Schema::Any => Ok(item.clone()),
        Schema::Atomic(ty) => {
            if item_matches(item, *ty) && !matches!((item, ty), (Item::Integer(_), ItemType::Decimal))
            {
                Ok(item.clone())
            } else {
                cast_item(item, *ty).map_err(|e| annotate_error(path, index, e.message))
            }
        }
        Schema::Array(elem) => {
            let values = item.as_array().ok_or_else(|| {
                annotate_error(path, index, format!("expected an array, got {}", item.type_name()))
            })?;
            let mut out = Vec::with_capacity(values.len());
            for (i, value) in values.iter().enumerate() {
                out.push(coerce(value, elem, &format!("{path}[{}]", i + 1), index)?);
            }
            Ok(Item::array(out))
        }
        Schema::Object(obj_schema) => {
            let obj = item.as_object().ok_or_else(|| {
                annotate_error(path, index, format!("expected an object, got {}", item.type_name()))
            })?;
            let mut out = Object::with_capacity(obj_schema.fields.len());
            for field in &obj_schema.fields {
                let field_path = format!("{path}.{}", field.name);
                match obj.get(&field.name) {
                    None => {
                        if field.required {
                            return Err(annotate_error(&field_path, index, "missing required field"));
                        }
                    }
                    Some(Item::Null) if !field.required => {
                        out.insert(field.name.clone(), Item::Null)
                            .expect("unique schema fields");
                    }
                    Some(value) => {
                        out.insert(
                            field.name.clone(),
                            coerce(value, &field.schema, &field_path, index)?,
                        )
                        .expect("unique schema fields");
                    }
                }
            }
            Ok(Item::object(out))
        }
    }
}

/// Rebuild a schema-shaped object from one row of cells (the frame → item
/// lowering for annotate output).
pub fn row_to_object(cells: &[Sequence], schema: &ObjectSchema) -> Item {
    let mut obj = Object::with_capacity(schema.fields.len());
    for (field, cell) in schema.fields.iter().zip(cells) {
        if let Some(value) = cell.first() {
            obj.insert(field.name.clone(), value.clone()).expect("unique schema fields");
        }
    }
    Item::object(obj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_json_line;

    fn schema_of(text: &str) -> Schema {
        Schema::from_item(&parse_json_line(text).unwrap()).unwrap()
    }

    #[test]
    fn parses_nested_schema() {
        let schema = schema_of(
            r#"{"type": "string", "count": "integer?", "payload": {"id": "integer", "tags": ["string"]}, "payload?": "string"}"#,
        );
        let obj = schema.as_object().unwrap();
        assert_eq!(obj.fields.len(), 4);
        assert!(obj.fields[0].required);
        assert!(!obj.fields[1].required);
        assert_eq!(obj.fields[3].name.as_ref(), "payload");
        assert!(!obj.fields[3].required);
    }

    #[test]
    fn coerces_and_validates() {
        let schema = schema_of(r#"{"a": "integer", "b": "string?"}"#);
        let obj = schema.as_object().unwrap();
        // "42" coerces to 42 under an integer schema.
        let cells =
            annotate_object(&parse_json_line(r#"{"a": "42", "extra": 1}"#).unwrap(), obj, 0)
                .unwrap();
        assert_eq!(cells[0], vec![Item::integer(42)]);
        assert!(cells[1].is_empty());
        // Missing required field fails with the path and item index.
        let err = annotate_object(&parse_json_line(r#"{"b": "x"}"#).unwrap(), obj, 3).unwrap_err();
        assert_eq!(err.code, ErrorCode::Annotate);
        assert!(err.message.contains("item 3"), "{}", err.message);
        assert!(err.message.contains("$.a"), "{}", err.message);
        // Uncoercible value fails.
        let err = annotate_object(&parse_json_line(r#"{"a": "4x"}"#).unwrap(), obj, 0).unwrap_err();
        assert_eq!(err.code, ErrorCode::Annotate);
    }

    #[test]
    fn unknown_type_name_rejected() {
        let err = Schema::from_item(&parse_json_line(r#"{"a": "int"}"#).unwrap()).unwrap_err();
        assert_eq!(err.code, ErrorCode::InvalidArgument);
    }
}
