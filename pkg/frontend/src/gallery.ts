/**
 * Event gallery: filter controls + paginated photo grid.
 *
 * Pure DOM construction; all data comes from the photo-page payload and the
 * current route. Changing a control or clicking pagination invokes the
 * callbacks with an updated route — navigation is the caller's concern.
 */

import type { PhotoPage, PhotoRecord } from "./types.js";
import { ORIENTATIONS } from "./types.js";
import type { GalleryRoute } from "./state.js";
import { withFilter } from "./state.js";

export interface GalleryCallbacks {
  onNavigate: (route: GalleryRoute) => void;
  onOpenPhoto: (photoId: string) => void;
}

function select(
  label: string,
  options: string[],
  current: string | undefined,
  onChange: (value: string | undefined) => void,
): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "filter";
  wrap.textContent = label;
  const el = document.createElement("select");
  el.dataset.filter = label;
  const any = document.createElement("option");
  any.value = "";
  any.textContent = "any";
  el.append(any);
  for (const option of options) {
    const node = document.createElement("option");
    node.value = option;
    node.textContent = option;
    el.append(node);
  }
  el.value = current ?? "";
  el.addEventListener("change", () => onChange(el.value || undefined));
  wrap.append(el);
  return wrap;
}

function textFilter(
  label: string,
  current: string | undefined,
  onChange: (value: string | undefined) => void,
): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "filter";
  wrap.textContent = label;
  const el = document.createElement("input");
  el.type = "text";
  el.dataset.filter = label;
  el.value = current ?? "";
  el.addEventListener("change", () => onChange(el.value.trim() || undefined));
  wrap.append(el);
  return wrap;
}

export function renderFilterBar(
  route: GalleryRoute,
  manufacturers: string[],
  callbacks: GalleryCallbacks,
): HTMLElement {
  const bar = document.createElement("div");
  bar.className = "filter-bar";
  const f = route.filters;
  bar.append(
    textFilter("number", f.number, (v) => callbacks.onNavigate(withFilter(route, "number", v))),
    textFilter("team", f.team, (v) => callbacks.onNavigate(withFilter(route, "team", v))),
    select("orientation", [...ORIENTATIONS], f.orientation, (v) =>
      callbacks.onNavigate(withFilter(route, "orientation", v)),
    ),
    select("manufacturer", manufacturers, f.manufacturer, (v) =>
      callbacks.onNavigate(withFilter(route, "manufacturer", v)),
    ),
    select("status", ["processed", "no_car", "pending", "failed"], f.status, (v) =>
      callbacks.onNavigate(withFilter(route, "status", v)),
    ),
  );
  return bar;
}

function photoCard(photo: PhotoRecord, callbacks: GalleryCallbacks): HTMLElement {
  const card = document.createElement("article");
  card.className = "photo-card";
  card.dataset.photoId = photo.photo_id;

  const title = document.createElement("h3");
  title.textContent = photo.photo_id;
  card.append(title);

  const status = document.createElement("span");
  status.className = `status status-${photo.status}`;
  status.textContent = photo.status;
  card.append(status);

  const cars = document.createElement("ul");
  for (const annotation of photo.annotations) {
    const li = document.createElement("li");
    const bits = [
      annotation.number ? `#${annotation.number}` : "no number",
      annotation.team_assignment ? `team ${annotation.team_assignment}` : null,
      annotation.orientation,
      annotation.manufacturer,
    ].filter((b): b is string => Boolean(b));
    li.textContent = bits.join(" · ");
    cars.append(li);
  }
  card.append(cars);

  card.addEventListener("click", () => callbacks.onOpenPhoto(photo.photo_id));
  return card;
}

export function renderGallery(
  route: GalleryRoute,
  page: PhotoPage,
  manufacturers: string[],
  callbacks: GalleryCallbacks,
): HTMLElement {
  const root = document.createElement("section");
  root.className = "gallery";
  root.append(renderFilterBar(route, manufacturers, callbacks));

  if (page.items.length === 0) {
    const empty = document.createElement("p");
    empty.className = "empty-state";
    empty.textContent = "No photos match the current filters.";
    root.append(empty);
    return root;
  }

  const grid = document.createElement("div");
  grid.className = "photo-grid";
  for (const photo of page.items) {
    grid.append(photoCard(photo, callbacks));
  }
  root.append(grid);

  const pager = document.createElement("nav");
  pager.className = "pager";
  const info = document.createElement("span");
  info.textContent = `page ${page.page} of ${page.pages} (${page.total} photos)`;
  const prev = document.createElement("button");
  prev.textContent = "previous";
  prev.disabled = page.page <= 1;
  prev.addEventListener("click", () =>
    callbacks.onNavigate({
      ...route,
      filters: { ...route.filters, page: route.filters.page - 1 },
    }),
  );
  const next = document.createElement("button");
  next.textContent = "next";
  next.disabled = page.page >= page.pages;
  next.addEventListener("click", () =>
    callbacks.onNavigate({
      ...route,
      filters: { ...route.filters, page: route.filters.page + 1 },
    }),
  );
  pager.append(prev, info, next);
  root.append(pager);
  return root;
}
