/**
 * App wiring: hash router, data fetching, and view composition.
 *
 * Layout per event: header with name and live feedback count, team panel on
 * the side, gallery or photo detail as the main view. API failures show a
 * non-blocking banner with a retry button; the current route is never lost.
 */

import { ApiClient } from "./api.js";
import { renderGallery } from "./gallery.js";
import { renderPhotoDetail } from "./detail.js";
import { renderTeamPanel } from "./teams.js";
import type { GalleryRoute, Route } from "./state.js";
import { defaultFilters, parseHash, routeToHash, withFilter } from "./state.js";
import type { EventSummary } from "./types.js";

export interface App {
  render: () => Promise<void>;
}

export function createApp(
  root: HTMLElement,
  client: ApiClient,
  navigate: (hash: string) => void = (hash) => {
    window.location.hash = hash;
  },
): App {
  let manufacturers: string[] = [];

  function go(route: Route): void {
    navigate(routeToHash(route));
  }

  function errorBanner(message: string, retry: () => void): HTMLElement {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    const text = document.createElement("span");
    text.textContent = message;
    const button = document.createElement("button");
    button.textContent = "retry";
    button.addEventListener("click", retry);
    banner.append(text, button);
    return banner;
  }

  function header(summary: EventSummary): HTMLElement {
    const el = document.createElement("header");
    el.className = "event-header";
    const title = document.createElement("h1");
    title.textContent = summary.name || summary.event_id;
    const stats = document.createElement("p");
    stats.className = "event-stats";
    const counts = summary.photo_counts;
    stats.textContent =
      `${summary.total_photos} photos · ${counts.processed} processed · ` +
      `${counts.no_car} without cars · feedback: `;
    const feedback = document.createElement("span");
    feedback.className = "feedback-count";
    feedback.textContent = String(summary.feedback_count);
    stats.append(feedback);
    el.append(title, stats);
    return el;
  }

  async function renderHome(): Promise<void> {
    const { events } = await client.listEvents();
    root.replaceChildren();
    const heading = document.createElement("h1");
    heading.textContent = "Race events";
    root.append(heading);
    const list = document.createElement("ul");
    list.className = "event-list";
    for (const event of events) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = routeToHash({
        view: "gallery",
        eventId: event.event_id,
        filters: defaultFilters(),
      });
      link.textContent = `${event.name || event.event_id} ${event.date}`.trim();
      item.append(link);
      list.append(item);
    }
    if (events.length === 0) {
      const hint = document.createElement("p");
      hint.className = "empty-state";
      hint.textContent = "No events yet.";
      root.append(hint);
    }
    root.append(list);
  }

  async function renderGalleryRoute(route: GalleryRoute): Promise<void> {
    const [summary, page, teamSnapshot] = await Promise.all([
      client.eventSummary(route.eventId),
      client.listPhotos(route.eventId, route.filters),
      client.teams(route.eventId),
    ]);
    if (manufacturers.length === 0) {
      const seen = new Set<string>();
      for (const photo of page.items) {
        for (const annotation of photo.annotations) {
          if (annotation.manufacturer) seen.add(annotation.manufacturer);
        }
      }
      manufacturers = [...seen].sort();
    }
    root.replaceChildren();
    root.append(header(summary));
    const row = document.createElement("div");
    row.className = "layout-row";
    row.append(
      renderTeamPanel(teamSnapshot, (teamId) => go(withFilter(route, "team", teamId))),
      renderGallery(route, page, manufacturers, {
        onNavigate: go,
        onOpenPhoto: (photoId) =>
          go({ view: "detail", eventId: route.eventId, photoId }),
      }),
    );
    root.append(row);
  }

  async function renderDetailRoute(eventId: string, photoId: string): Promise<void> {
    const [summary, overlay] = await Promise.all([
      client.eventSummary(eventId),
      client.overlay(photoId),
    ]);
    root.replaceChildren();
    root.append(header(summary));
    root.append(
      renderPhotoDetail(overlay, {
        onBack: () => go({ view: "gallery", eventId, filters: defaultFilters() }),
        onSubmitFeedback: async (reason, note) => {
          await client.submitFeedback(photoId, reason, note);
          // confirmation updates the live feedback count
          const updated = await client.eventSummary(eventId);
          const counter = root.querySelector(".feedback-count");
          if (counter) counter.textContent = String(updated.feedback_count);
        },
      }),
    );
  }

  async function render(): Promise<void> {
    const route = parseHash(window.location.hash);
    try {
      if (route.view === "home") {
        await renderHome();
      } else if (route.view === "gallery") {
        await renderGalleryRoute(route);
      } else {
        await renderDetailRoute(route.eventId, route.photoId);
      }
    } catch (error) {
      const banner = errorBanner(`Cannot reach the API: ${String(error)}`, () => {
        void render();
      });
      root.prepend(banner);
    }
  }

  return { render };
}

export function bootstrap(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const token = new URLSearchParams(window.location.search).get("token");
  const app = createApp(root, new ApiClient("", token));
  window.addEventListener("hashchange", () => void app.render());
  void app.render();
}
