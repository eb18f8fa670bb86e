/**
 * Team panel: the centroid-store dashboard for an event.
 *
 * Lists every team with its reference count and finalized badge; clicking a
 * team hands the team id to the callback, which applies the gallery filter.
 */

import type { TeamSnapshot } from "./types.js";

export function renderTeamPanel(
  snapshot: TeamSnapshot,
  onTeamClick: (teamId: string) => void,
): HTMLElement {
  const panel = document.createElement("aside");
  panel.className = "team-panel";

  const heading = document.createElement("h2");
  heading.textContent = "Teams";
  panel.append(heading);

  const teams = Object.keys(snapshot.teams).sort();
  if (teams.length === 0) {
    const hint = document.createElement("p");
    hint.className = "empty-state";
    hint.textContent = "No teams yet — process the event to collect reference embeddings.";
    panel.append(hint);
    return panel;
  }

  const list = document.createElement("ul");
  for (const teamId of teams) {
    const state = snapshot.teams[teamId];
    const item = document.createElement("li");
    const button = document.createElement("button");
    button.className = "team";
    button.dataset.teamId = teamId;
    button.textContent = `team ${teamId}`;
    button.addEventListener("click", () => onTeamClick(teamId));
    item.append(button);

    const refs = document.createElement("span");
    refs.className = "ref-count";
    refs.textContent = `${state.reference_count} refs`;
    item.append(refs);

    if (state.finalized) {
      const badge = document.createElement("span");
      badge.className = "badge finalized";
      badge.textContent = "finalized";
      item.append(badge);
    }
    list.append(item);
  }
  panel.append(list);
  return panel;
}
