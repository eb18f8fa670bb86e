/**
 * View state <-> URL round trip.
 *
 * The entire client state lives in the location hash, so views are
 * shareable and a full page reload reproduces them exactly:
 *
 *   #/events/<id>/photos?orientation=left&team=43&page=2
 *   #/events/<id>/photos/<photoId>
 */

export interface GalleryFilters {
  number?: string;
  team?: string;
  orientation?: string;
  manufacturer?: string;
  status?: string;
  page: number;
  pageSize: number;
}

export interface GalleryRoute {
  view: "gallery";
  eventId: string;
  filters: GalleryFilters;
}

export interface DetailRoute {
  view: "detail";
  eventId: string;
  photoId: string;
}

export interface HomeRoute {
  view: "home";
}

export type Route = GalleryRoute | DetailRoute | HomeRoute;

export const DEFAULT_PAGE_SIZE = 24;

export function defaultFilters(): GalleryFilters {
  return { page: 1, pageSize: DEFAULT_PAGE_SIZE };
}

const FILTER_KEYS = ["number", "team", "orientation", "manufacturer", "status"] as const;

export function filtersToQuery(filters: GalleryFilters): string {
  const params = new URLSearchParams();
  for (const key of FILTER_KEYS) {
    const value = filters[key];
    if (value) params.set(key, value);
  }
  if (filters.page !== 1) params.set("page", String(filters.page));
  if (filters.pageSize !== DEFAULT_PAGE_SIZE) params.set("page_size", String(filters.pageSize));
  const query = params.toString();
  return query ? `?${query}` : "";
}

export function parseFilters(query: string): GalleryFilters {
  const params = new URLSearchParams(query.startsWith("?") ? query.slice(1) : query);
  const filters = defaultFilters();
  for (const key of FILTER_KEYS) {
    const value = params.get(key);
    if (value) filters[key] = value;
  }
  const page = Number(params.get("page") ?? "1");
  const pageSize = Number(params.get("page_size") ?? String(DEFAULT_PAGE_SIZE));
  if (Number.isInteger(page) && page >= 1) filters.page = page;
  if (Number.isInteger(pageSize) && pageSize >= 1) filters.pageSize = pageSize;
  return filters;
}

export function routeToHash(route: Route): string {
  switch (route.view) {
    case "home":
      return "#/";
    case "gallery":
      return `#/events/${encodeURIComponent(route.eventId)}/photos${filtersToQuery(route.filters)}`;
    case "detail":
      return `#/events/${encodeURIComponent(route.eventId)}/photos/${encodeURIComponent(route.photoId)}`;
  }
}

export function parseHash(hash: string): Route {
  const raw = hash.startsWith("#") ? hash.slice(1) : hash;
  const [path, query = ""] = raw.split("?", 2);
  const parts = path.split("/").filter((p) => p.length > 0);
  if (parts[0] === "events" && parts.length >= 3 && parts[2] === "photos") {
    const eventId = decodeURIComponent(parts[1]);
    if (parts.length === 4) {
      return { view: "detail", eventId, photoId: decodeURIComponent(parts[3]) };
    }
    return { view: "gallery", eventId, filters: parseFilters(query) };
  }
  return { view: "home" };
}

/** Route with one filter changed and paging reset, for filter-control wiring. */
export function withFilter(
  route: GalleryRoute,
  key: (typeof FILTER_KEYS)[number],
  value: string | undefined,
): GalleryRoute {
  const filters = { ...route.filters, page: 1 };
  if (value) {
    filters[key] = value;
  } else {
    delete filters[key];
  }
  return { ...route, filters };
}
