use std::collections::HashMap;
use std::sync::Arc;

use crate::constraints::{ConstraintSet, ConstraintTable};
use crate::domain::{
    validate_catalog, BodyType, ColorId, Day, Order, ScenarioCatalog, ValidationReport,
};

pub type OrderIdx = u32;
pub(crate) type SigIdx = u32;

/// Per-order fields the decision loops touch, packed.
#[derive(Clone, Copy, Debug)]
pub(crate) struct OrderMeta {
    pub body: u16,
    pub color: u16,
    pub sig: SigIdx,
    pub due: Day,
    pub blend: u64,
}

/// A validated catalog with interned body types, colors and constraint signatures.
#[derive(Debug)]
pub struct CompiledCatalog {
    catalog: ScenarioCatalog,
    table: Arc<ConstraintTable>,
    sigs: Vec<Arc<ConstraintSet>>,
    meta: Vec<OrderMeta>,
    order_ids: Vec<Arc<str>>,
    by_id: HashMap<String, OrderIdx>,
    bodies: Vec<BodyType>,
    colors: Vec<ColorId>,
    color_index: HashMap<ColorId, u16>,
}

impl CompiledCatalog {
    pub fn new(catalog: ScenarioCatalog) -> Result<CompiledCatalog, ValidationReport> {
        let report = validate_catalog(&catalog);
        if !report.is_ok() {
            return Err(report);
        }
        let table = Arc::new(ConstraintTable::new(catalog.constraints.clone()));
        let bodies: Vec<BodyType> = catalog.body_types.clone();
        let body_index: HashMap<&BodyType, u16> = bodies
            .iter()
            .enumerate()
            .map(|(i, b)| (b, i as u16))
            .collect();
        let colors: Vec<ColorId> = catalog.colors.iter().map(|c| c.id.clone()).collect();
        let color_index: HashMap<ColorId, u16> = colors
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i as u16))
            .collect();

        let mut sig_index: HashMap<ConstraintSet, SigIdx> = HashMap::new();
        let mut sigs = Vec::new();
        let mut meta = Vec::with_capacity(catalog.orders.len());
        let mut by_id = HashMap::with_capacity(catalog.orders.len());
        let mut order_ids = Vec::with_capacity(catalog.orders.len());
        for (i, o) in catalog.orders.iter().enumerate() {
            let set = table.matching(&o.features);
            let sig = *sig_index.entry(set.clone()).or_insert_with(|| {
                sigs.push(Arc::new(set));
                (sigs.len() - 1) as SigIdx
            });
            meta.push(OrderMeta {
                body: body_index[&o.body_type],
                color: color_index[&o.color],
                sig,
                due: o.due_date,
                blend: o.blend_number,
            });
            by_id.insert(o.order_id.clone(), i as OrderIdx);
            order_ids.push(Arc::from(o.order_id.as_str()));
        }
        drop(body_index);
        Ok(CompiledCatalog {
            catalog,
            table,
            sigs,
            meta,
            order_ids,
            by_id,
            bodies,
            colors,
            color_index,
        })
    }

    pub fn catalog(&self) -> &ScenarioCatalog {
        &self.catalog
    }

    pub fn table(&self) -> &Arc<ConstraintTable> {
        &self.table
    }

    pub fn order(&self, idx: OrderIdx) -> &Order {
        &self.catalog.orders[idx as usize]
    }

    pub fn order_count(&self) -> usize {
        self.meta.len()
    }

    pub fn order_index(&self, order_id: &str) -> Option<OrderIdx> {
        self.by_id.get(order_id).copied()
    }

    pub(crate) fn order_id_arc(&self, idx: OrderIdx) -> &Arc<str> {
        &self.order_ids[idx as usize]
    }

    pub fn body_index(&self, body: &BodyType) -> Option<u16> {
        self.bodies.iter().position(|b| b == body).map(|i| i as u16)
    }

    pub fn body_count(&self) -> usize {
        self.bodies.len()
    }

    pub fn color(&self, idx: u16) -> &ColorId {
        &self.colors[idx as usize]
    }

    pub fn color_index(&self, color: &ColorId) -> Option<u16> {
        self.color_index.get(color).copied()
    }

    pub fn color_count(&self) -> usize {
        self.colors.len()
    }

    pub(crate) fn meta(&self, idx: OrderIdx) -> &OrderMeta {
        &self.meta[idx as usize]
    }

    pub(crate) fn sig(&self, sig: SigIdx) -> &Arc<ConstraintSet> {
        &self.sigs[sig as usize]
    }

    /// `C_o` of an order as an index set.
    pub fn matched(&self, idx: OrderIdx) -> &Arc<ConstraintSet> {
        self.sig(self.meta(idx).sig)
    }
}
