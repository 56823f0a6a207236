use super::instance::{Entity, RelationInstance};

/// Cartesian expansion over entity normalization IDs.
///
/// Each output assigns one kb_id per entity slot. When per-mention IDs are
/// present, only mentions carrying the chosen ID are kept (all of them if
/// none carry it); otherwise every mention is duplicated. Entities without
/// kb_ids pass through. A single combination returns the input unchanged.
pub fn expand_entities(inst: &RelationInstance) -> Vec<RelationInstance> {
    let counts: Vec<usize> = inst.entities.iter().map(|e| e.kb_ids.len().max(1)).collect();
    let total: usize = counts.iter().product();
    if total == 1 {
        return vec![inst.clone()];
    }
    let mut choice = vec![0usize; counts.len()];
    let mut out = Vec::with_capacity(total);
    for k in 0..total {
        let entities = inst
            .entities
            .iter()
            .zip(&choice)
            .map(|(e, &c)| pick(e, c))
            .collect();
        out.push(RelationInstance {
            id: format!("{}#{k}", inst.id),
            entities,
            group: Some(inst.group_id().to_string()),
            ..inst.clone()
        });
        // odometer, last slot fastest
        for slot in (0..choice.len()).rev() {
            choice[slot] += 1;
            if choice[slot] < counts[slot] {
                break;
            }
            choice[slot] = 0;
        }
    }
    out
}

fn pick(entity: &Entity, choice: usize) -> Entity {
    if entity.kb_ids.len() <= 1 {
        return entity.clone();
    }
    let id = &entity.kb_ids[choice];
    let (mentions, mention_kb_ids) = match &entity.mention_kb_ids {
        Some(per_mention) => {
            let kept: Vec<usize> = (0..entity.mentions.len())
                .filter(|&m| per_mention[m].contains(id))
                .collect();
            let kept = if kept.is_empty() {
                (0..entity.mentions.len()).collect()
            } else {
                kept
            };
            (
                kept.iter().map(|&m| entity.mentions[m]).collect(),
                Some(kept.iter().map(|_| vec![id.clone()]).collect()),
            )
        }
        None => (entity.mentions.clone(), None),
    };
    Entity {
        eid: entity.eid.clone(),
        kb_ids: vec![id.clone()],
        mentions,
        mention_kb_ids,
    }
}
